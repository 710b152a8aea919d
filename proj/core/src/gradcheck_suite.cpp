#include "trg/gradcheck_suite.hpp"

#include <random>

#include "trg/config.hpp"
#include "trg/graph.hpp"
#include "trg/losses.hpp"
#include "trg/ops.hpp"
#include "trg/trainer.hpp"

namespace trg {

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale, bool grad) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<int> random_labels(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(pick(rng, 0, k - 1));
  return y;
}

GradCheckResult check_kd(std::mt19937_64& rng, double h) {
  const std::size_t b = pick(rng, 2, 8), k = pick(rng, 2, 5);
  auto zs = random_tensor({b, k}, rng, 2.0, true);
  auto zt = random_tensor({b, k}, rng, 2.0, false);
  const double tau = std::uniform_real_distribution<double>(1.0, 5.0)(rng);
  return grad_check([&] { return kd_loss(soften(zs, tau), soften(zt, tau)); }, {zs}, h);
}

GradCheckResult check_logit(std::mt19937_64& rng, double h) {
  const std::size_t b = pick(rng, 2, 8), k = pick(rng, 2, 5);
  auto zs = random_tensor({b, k}, rng, 2.0, true);
  auto zt = random_tensor({b, k}, rng, 2.0, false);
  const auto y = random_labels(b, k, rng);
  return grad_check([&] { return logit_loss(zs, zt, y, 4.0, 1.0).total; }, {zs}, h);
}

GradCheckResult check_local(std::mt19937_64& rng, double h) {
  const std::size_t s = pick(rng, 4, 16), dt = pick(rng, 2, 8), ds = pick(rng, 2, 8);
  const std::size_t k = pick(rng, 1, std::min<std::size_t>(5, s - 1));
  TokenBatch tb{random_tensor({s, dt}, rng, 1.0, false), std::vector<std::size_t>(s, 0), 1, TokenSource::teacher};
  auto xs = random_tensor({s, ds}, rng, 1.0, true);
  const auto gt = build_token_graph(tb, k, SigmaPolicy::median());
  return grad_check(
      [&] {
        TokenBatch sb{xs, tb.instance_index, 1, TokenSource::student};
        return local_loss(build_token_graph(sb, k, SigmaPolicy::fixed(gt.sigma)), gt);
      },
      {xs}, h);
}

GradCheckResult check_global(std::mt19937_64& rng, double h) {
  const std::size_t s = pick(rng, 2, 16), dt = pick(rng, 2, 8), ds = pick(rng, 2, 8);
  auto xs = random_tensor({s, ds}, rng, 1.0, true);
  auto xt = random_tensor({s, dt}, rng, 1.0, false);
  Projection proj(ds, dt, rng());
  const double tau_g = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
  return grad_check([&] { return global_loss(token_similarity(xs, xt, proj), tau_g); }, {xs, proj.weight()}, h);
}

GradCheckResult check_inner(std::mt19937_64& rng, double h) {
  const std::size_t b = pick(rng, 1, 3), n = pick(rng, 2, 8), dt = pick(rng, 2, 8), ds = pick(rng, 2, 8);
  auto ft = random_tensor({b, n, dt}, rng, 1.0, false);
  auto fs = random_tensor({b, n, ds}, rng, 1.0, true);
  return grad_check([&] { return inner_loss(contextual_similarity(ft), contextual_similarity(fs)); }, {fs}, h);
}

// Whole objective through two tiny networks.
GradCheckResult check_total(std::mt19937_64& rng, double h) {
  RunConfig cfg;
  cfg.num_classes = pick(rng, 2, 5);
  cfg.height = cfg.width = 4;
  cfg.teacher_net = NetSpec::parse("mlp:patch=2:widths=4,8,6");
  cfg.student_net = NetSpec::parse("mlp:patch=2:widths=4,5,3");
  cfg.token_count = 4;
  cfg.tokens_per_instance = 2;
  cfg.batch_size = 4;
  cfg.k = 2;
  cfg.seed = rng();
  cfg.teacher_seed = rng();
  cfg.epochs = 16;
  const std::size_t b = 4;
  auto teacher = make_teacher(cfg);
  teacher.freeze();
  auto student = make_student(cfg);
  auto proj = make_projection(cfg, teacher, student);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(b * 16);
  for (auto& x : px) x = u(rng);
  const Tensor images({b, 1, 4, 4}, std::move(px));
  const auto y = random_labels(b, cfg.num_classes, rng);
  const std::size_t epoch = pick(rng, 1, 16);
  const std::uint64_t plan_seed = rng();
  auto params = student.parameters();
  params.push_back(proj.weight());
  return grad_check(
      [&] { return compute_objective(teacher, student, proj, images, y, cfg, epoch, plan_seed).total.value; },
      params, h);
}

}  // namespace

std::vector<SuiteEntry> run_gradcheck_suite(std::size_t seeds, double tolerance, double h,
                                            std::uint64_t first_seed) {
  using Check = GradCheckResult (*)(std::mt19937_64&, double);
  const std::vector<std::pair<const char*, Check>> checks = {
      {"kd", check_kd},         {"logit", check_logit}, {"local", check_local},
      {"global", check_global}, {"inner", check_inner}, {"total", check_total},
  };
  std::vector<SuiteEntry> out;
  for (std::size_t c = 0; c < checks.size(); ++c) {
    const auto& [name, fn] = checks[c];
    SuiteEntry e;
    e.loss = name;
    for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
      std::mt19937_64 rng(derive_seed(s, {c}));
      const auto r = fn(rng, h);
      ++e.cases;
      if (r.max_rel_error > e.max_rel_error || e.cases == 1) {
        e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
        e.worst_seed = s;
      }
      if (r.max_rel_error > tolerance) ++e.failures;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace trg
