#include "trg/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "trg/errors.hpp"
#include "trg/trainer.hpp"

namespace trg {

namespace {

std::uint64_t data_key(const RunConfig& cfg) {
  // The teacher hash covers every data field plus teacher settings; strip the latter.
  RunConfig c;
  for (const char* key : {"dataset", "dataset_format", "num_classes", "channels", "height", "width",
                          "synth_per_class", "synth_noise", "data_seed", "train_fraction", "imbalance_rate"}) {
    set_config_value(c, key, get_config_value(cfg, key));
  }
  return teacher_config_hash(c);
}

std::string ablate_text(const RunConfig& cfg) { return get_config_value(cfg, "ablate"); }

}  // namespace

std::vector<SweepCell> loss_ablation_cells(const RunConfig& base, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw UsageError("sweep needs at least one seed");
  struct Variant {
    const char* name;
    std::vector<LossTerm> ablate;
    GraphLevel level;
  };
  const std::vector<Variant> variants = {
      {"baseline", {LossTerm::kd, LossTerm::inner, LossTerm::local, LossTerm::global}, GraphLevel::token},
      {"kd", {LossTerm::inner, LossTerm::local, LossTerm::global}, GraphLevel::token},
      {"no_graph", {LossTerm::local, LossTerm::global}, GraphLevel::token},
      {"no_global", {LossTerm::global}, GraphLevel::token},
      {"instance", {}, GraphLevel::instance},
      {"trg", {}, GraphLevel::token},
  };
  std::vector<SweepCell> cells;
  for (const auto& v : variants)
    for (auto seed : seeds) {
      RunConfig c = base;
      c.ablate = v.ablate;
      c.graph_level = v.level;
      c.seed = seed;
      cells.push_back({v.name, c});
    }
  return cells;
}

std::vector<SweepCell> grid_cells(const RunConfig& base, const SweepGrid& grid) {
  const bool any_axis = !grid.alphas.empty() || !grid.betas.empty() || !grid.gammas.empty() ||
                        !grid.ks.empty() || !grid.batch_sizes.empty() || !grid.seeds.empty();
  if (!any_axis) throw UsageError("sweep grid is empty: give at least one axis");
  auto or_base = [](auto values, auto fallback) {
    if (values.empty()) values.push_back(fallback);
    return values;
  };
  const auto alphas = or_base(grid.alphas, base.alpha);
  const auto betas = or_base(grid.betas, base.beta);
  const auto gammas = or_base(grid.gammas, base.gamma);
  const auto ks = or_base(grid.ks, base.k);
  const auto bss = or_base(grid.batch_sizes, base.batch_size);
  const auto seeds = or_base(grid.seeds, base.seed);
  std::vector<SweepCell> cells;
  for (double a : alphas)
    for (double b : betas)
      for (double g : gammas)
        for (auto k : ks)
          for (auto bs : bss)
            for (auto seed : seeds) {
              RunConfig c = base;
              c.alpha = a;
              c.beta = b;
              c.gamma = g;
              c.k = k;
              c.batch_size = bs;
              c.seed = seed;
              std::ostringstream name;
              name << "a" << a << "_b" << b << "_g" << g << "_k" << k << "_bs" << bs;
              cells.push_back({name.str(), c});
            }
  return cells;
}

const SplitDataset& TeacherCache::data(const RunConfig& cfg) {
  auto& slot = data_[data_key(cfg)];
  if (!slot) slot = std::make_unique<SplitDataset>(prepare_data(cfg));
  return *slot;
}

const ToyNet& TeacherCache::teacher(const RunConfig& cfg) {
  const auto key = teacher_config_hash(cfg);
  auto& slot = teachers_[key];
  if (!slot) {
    const auto& split = data(cfg);
    slot = std::make_unique<ToyNet>(make_teacher(cfg));
    train_accuracy_[key] = pretrain_teacher(*slot, split.train, cfg).train_accuracy;
  }
  return *slot;
}

double TeacherCache::teacher_train_accuracy(const RunConfig& cfg) {
  teacher(cfg);
  return train_accuracy_.at(teacher_config_hash(cfg));
}

void TeacherCache::put(const RunConfig& cfg, ToyNet teacher) {
  if (!teacher.frozen()) teacher.freeze();
  const auto key = teacher_config_hash(cfg);
  train_accuracy_[key] = evaluate(teacher, data(cfg).train);
  teachers_[key] = std::make_unique<ToyNet>(std::move(teacher));
}

std::vector<SweepRow> run_sweep(const std::vector<SweepCell>& cells, TeacherCache& teachers,
                                const std::filesystem::path& output_dir,
                                const std::function<void(const SweepRow&)>& on_row) {
  if (cells.empty()) throw UsageError("sweep has no cells");
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    const auto& c = cell.config;
    SweepRow row;
    row.name = cell.name;
    row.seed = c.seed;
    row.alpha = c.alpha;
    row.beta = c.beta;
    row.gamma = c.gamma;
    row.k = c.k;
    row.batch_size = c.batch_size;
    row.imbalance_rate = c.imbalance_rate;
    row.ablate = ablate_text(c);
    row.graph_level = get_config_value(c, "graph_level");
    try {
      c.validate();
      std::filesystem::path dir;
      if (!output_dir.empty()) {
        dir = output_dir / (std::to_string(i) + "_" + cell.name + "_s" + std::to_string(c.seed));
        std::filesystem::create_directories(dir);
        std::ofstream(dir / "config.txt") << serialize_config(c);
      }
      const auto& teacher = teachers.teacher(c);
      const auto result = distill(teacher, make_student(c), teachers.data(c), c, dir);
      const auto& recs = result.records;
      const MetricRecord* last_train = nullptr;
      const MetricRecord* last_test = nullptr;
      for (const auto& r : recs) (r.split == "train" ? last_train : last_test) = &r;
      row.first_total_loss = recs.front().loss.total;
      row.final_train_accuracy = last_train->accuracy;
      row.final_test_accuracy = last_test->accuracy;
      row.final_total_loss = last_train->loss.total;
      row.final_mean_kld = last_test->mean_kld;
      row.final_mul = last_test->mul;
      row.best_test_accuracy = result.state.best_accuracy;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.status = "error";
      row.error = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "name,seed,alpha,beta,gamma,k,batch_size,imbalance_rate,ablate,graph_level,status,"
        "final_test_accuracy,best_test_accuracy,final_train_accuracy,first_total_loss,final_total_loss,"
        "final_mean_kld,final_mul,error\n"
     << std::setprecision(17);
  for (const auto& r : rows) {
    std::string err = r.error;
    for (auto& ch : err)
      if (ch == '"') ch = '\'';
    os << r.name << ',' << r.seed << ',' << r.alpha << ',' << r.beta << ',' << r.gamma << ',' << r.k << ','
       << r.batch_size << ',' << r.imbalance_rate << ",\"" << r.ablate << "\"," << r.graph_level << ','
       << r.status << ',' << r.final_test_accuracy << ',' << r.best_test_accuracy << ','
       << r.final_train_accuracy << ',' << r.first_total_loss << ',' << r.final_total_loss << ','
       << r.final_mean_kld << ',' << r.final_mul << ",\"" << err << "\"\n";
  }
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace trg
