#include <doctest.h>

#include <set>

#include "trg/config.hpp"
#include "trg/errors.hpp"
#include "trg/experiment.hpp"

using namespace trg;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("config text round trip") {
  RunConfig c;
  c.alpha = 0.25;
  c.k = 5;
  c.ablate = {LossTerm::global};
  c.sigma = SigmaPolicy::fixed(0.75);
  c.student_net = NetSpec::parse("tinyconv:channels=2,4:strides=1,2");
  c.lr_milestone_fracs = {0.5, 0.9};
  auto text = serialize_config(c);
  auto back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(parse_config(serialize_config(RunConfig{})) == RunConfig{});
  for (const auto& [key, value] : config_schema()) CHECK(get_config_value(RunConfig{}, key) == value);
}

TEST_CASE("config parsing errors name the field or line") {
  CHECK(message_of([] { parse_config("alpha = 1\nbogus = 3\n"); }).find("bogus") != std::string::npos);
  CHECK(message_of([] { parse_config("alpha = 1\nk three\n"); }).find("line 2") != std::string::npos);
  CHECK(message_of([] { parse_config("k = -1\n"); }).find("k") != std::string::npos);
  CHECK(message_of([] { parse_config("alpha = lots\n"); }).find("alpha") != std::string::npos);
  CHECK(message_of([] { parse_config("ablate = everything\n"); }).find("everything") != std::string::npos);
  CHECK_THROWS_AS(parse_config("bogus = 3"), ConfigError);

  auto c = parse_config("# comment\n\n  beta = 2   # trailing\n");
  CHECK(c.beta == 2.0);
}

TEST_CASE("validation") {
  RunConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [&](auto mutate) {
    RunConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.batch_size = 1; });
  bad([](RunConfig& c) { c.tau = 0.0; });
  bad([](RunConfig& c) { c.tau_g = -1.0; });
  bad([](RunConfig& c) { c.imbalance_rate = 0.5; });
  bad([](RunConfig& c) { c.train_fraction = 1.0; });
  bad([](RunConfig& c) { c.tokens_per_instance = 17; });
  bad([](RunConfig& c) { c.k = 128; });
  bad([](RunConfig& c) {
    c.graph_level = GraphLevel::instance;
    c.k = 64;
  });
}

TEST_CASE("hashes") {
  RunConfig a, b;
  b.output_dir = "elsewhere";
  b.teacher_checkpoint = "t.ckpt";
  CHECK(config_hash(a) == config_hash(b));
  b.gamma = 0.5;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(teacher_config_hash(a) == teacher_config_hash(b));
  b.teacher_epochs = 7;
  CHECK(teacher_config_hash(a) != teacher_config_hash(b));
}

TEST_CASE("sweep cells") {
  RunConfig base;
  auto cells = loss_ablation_cells(base, {1, 2, 3, 4, 5});
  CHECK(cells.size() == 30);
  std::set<std::string> names;
  for (const auto& c : cells) names.insert(c.name);
  CHECK(names == std::set<std::string>{"baseline", "kd", "no_graph", "no_global", "instance", "trg"});
  CHECK(cells.front().config.ablate.size() == 4);
  CHECK(cells.back().config.ablate.empty());

  SweepGrid grid;
  grid.alphas = {0.5, 1.0};
  grid.ks = {1, 3, 5};
  CHECK(grid_cells(base, grid).size() == 6);
  CHECK_THROWS_AS(grid_cells(base, SweepGrid{}), UsageError);
}
