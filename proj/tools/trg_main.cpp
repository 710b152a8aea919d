// trg: command-line driver for token relationship graph distillation.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trg/checkpoint.hpp"
#include "trg/config.hpp"
#include "trg/dataset.hpp"
#include "trg/errors.hpp"
#include "trg/experiment.hpp"
#include "trg/gradcheck_suite.hpp"
#include "trg/metrics.hpp"
#include "trg/trainer.hpp"

namespace fs = std::filesystem;
using namespace trg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumeric = 2, kIo = 3 };

// Flag values; unset ones leave the config file (or default) alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, k;
  std::optional<std::string> sigma, ablate, output_dir, dataset;
  std::optional<double> alpha, beta, gamma, tau, tau_g, warmup_frac, imbalance_rate;
  std::vector<std::string> sets;
  bool force = false;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "Config file (key = value lines)");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--epochs", o.epochs, "Epoch budget");
  cmd->add_option("--batch-size", o.batch_size, "Batch size");
  cmd->add_option("--k", o.k, "Neighbors per token");
  cmd->add_option("--sigma", o.sigma, "Kernel bandwidth: median or a positive number");
  cmd->add_option("--alpha", o.alpha, "Inner loss weight");
  cmd->add_option("--beta", o.beta, "Local loss weight");
  cmd->add_option("--gamma", o.gamma, "Global loss weight");
  cmd->add_option("--tau", o.tau, "Logit temperature");
  cmd->add_option("--tau-g", o.tau_g, "Initial graph temperature");
  cmd->add_option("--warmup-frac", o.warmup_frac, "Graph temperature warm-up as a fraction of the epochs");
  cmd->add_option("--imbalance-rate", o.imbalance_rate, "Largest/smallest class ratio of the train split");
  cmd->add_option("--ablate", o.ablate, "Loss terms to remove: comma list of kd,inner,local,global");
  cmd->add_option("--dataset", o.dataset, "synth or a dataset file");
  cmd->add_option("--output-dir", o.output_dir, "Run directory");
  cmd->add_option("--set", o.sets, "Any config field as key=value (repeatable)");
  cmd->add_flag("--force", o.force, "Reuse a non-empty output directory");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.k) cfg.k = *o.k;
  if (o.sigma) set_config_value(cfg, "sigma", *o.sigma);
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.beta) cfg.beta = *o.beta;
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.tau) cfg.tau = *o.tau;
  if (o.tau_g) cfg.tau_g = *o.tau_g;
  if (o.warmup_frac) cfg.warmup_frac = *o.warmup_frac;
  if (o.imbalance_rate) cfg.imbalance_rate = *o.imbalance_rate;
  if (o.ablate) set_config_value(cfg, "ablate", *o.ablate);
  if (o.dataset) cfg.dataset = *o.dataset;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  cfg.validate();
  return cfg;
}

// Creates the run directory, refusing a non-empty one unless forced.
fs::path claim_dir(const std::string& dir, bool force) {
  const fs::path p(dir);
  if (fs::exists(p) && !fs::is_empty(p) && !force) {
    throw UsageError("output directory " + dir + " is not empty (use --force to reuse it)");
  }
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  return p;
}

void write_config(const RunConfig& cfg, const fs::path& dir) {
  std::ofstream os(dir / "config.txt");
  os << serialize_config(cfg);
  if (!os) throw IoError("cannot write " + (dir / "config.txt").string());
}

int cmd_pretrain(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto dir = claim_dir(cfg.output_dir, o.force);
  write_config(cfg, dir);
  const auto data = prepare_data(cfg);
  auto teacher = make_teacher(cfg);
  const auto result = pretrain_teacher(teacher, data.train, cfg, &data.test);
  MetricWriter writer(dir, teacher_config_hash(cfg));
  for (const auto& r : result.records) writer.write(r);
  write_summary_csv(result.records, dir / "summary.csv");
  save_checkpoint(teacher_checkpoint(teacher, cfg), dir / "teacher.ckpt");
  std::cout << "teacher " << cfg.teacher_net.str() << " (" << teacher.parameter_count() << " parameters)\n"
            << "train_accuracy " << result.train_accuracy << "\n"
            << "test_accuracy " << evaluate(teacher, data.test) << "\n"
            << "checkpoint " << (dir / "teacher.ckpt").string() << "\n";
  return kOk;
}

int cmd_distill(const Overrides& o, const std::string& teacher_path, const std::string& resume_path) {
  auto cfg = resolve(o);
  if (!teacher_path.empty()) cfg.teacher_checkpoint = teacher_path;
  if (cfg.teacher_checkpoint.empty()) {
    throw UsageError("distill needs a teacher: pass --teacher PATH or set teacher_checkpoint");
  }
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  const auto dir = claim_dir(cfg.output_dir, o.force || resume.has_value());
  if (!resume) write_config(cfg, dir);
  const auto data = prepare_data(cfg);
  const auto teacher = load_teacher(load_checkpoint(cfg.teacher_checkpoint), cfg);
  const auto result = distill(teacher, make_student(cfg), data, cfg, dir, resume ? &*resume : nullptr);
  for (const auto& r : result.records) {
    if (r.epoch != result.state.epoch) continue;
    std::cout << r.split << "_accuracy " << r.accuracy << "\n";
  }
  std::cout << "best_test_accuracy " << result.state.best_accuracy << " (epoch " << result.state.best_epoch
            << ")\nmetrics " << (dir / "metrics.jsonl").string() << "\n";
  return kOk;
}

ToyNet load_any(const std::string& path, const RunConfig& cfg) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.kind == "teacher") return load_teacher(ckpt, cfg);
  return load_student(ckpt, cfg);
}

const LabeledDataset& pick_split(const SplitDataset& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "test") return data.test;
  throw UsageError("--split must be train or test, got '" + split + "'");
}

int cmd_eval(const Overrides& o, const std::string& ckpt_path) {
  const auto cfg = resolve(o);
  const auto data = prepare_data(cfg);
  const auto net = load_any(ckpt_path, cfg);
  std::cout << "train_accuracy " << evaluate(net, data.train) << "\n"
            << "test_accuracy " << evaluate(net, data.test) << "\n";
  return kOk;
}

int cmd_gradcheck(std::size_t seeds, double tolerance) {
  const auto entries = run_gradcheck_suite(seeds, tolerance);
  std::size_t failures = 0;
  std::cout << std::left << std::setw(8) << "loss" << std::setw(8) << "cases" << std::setw(16) << "max_rel_error"
            << "status\n";
  for (const auto& e : entries) {
    failures += e.failures;
    std::cout << std::setw(8) << e.loss << std::setw(8) << e.cases << std::setw(16) << std::setprecision(3)
              << std::scientific << e.max_rel_error << std::defaultfloat
              << (e.failures ? "FAIL (" + std::to_string(e.failures) + " cases, worst seed " +
                                   std::to_string(e.worst_seed) + ")"
                             : std::string("ok"))
              << "\n";
  }
  std::cout << "failures " << failures << " (tolerance " << tolerance << ")\n";
  return failures ? kNumeric : kOk;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    std::istringstream cell(item);
    T v{};
    if (!(cell >> v) || !cell.eof()) throw UsageError(std::string(flag) + ": bad entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

struct SweepArgs {
  std::string preset;
  std::string seeds, alphas, betas, gammas, ks, batch_sizes;
  std::string teacher;
};

int cmd_sweep(const Overrides& o, const SweepArgs& a) {
  const auto cfg = resolve(o);
  const auto seeds = parse_list<std::uint64_t>(a.seeds, "--seeds");
  std::vector<SweepCell> cells;
  if (a.preset == "ablation") {
    cells = loss_ablation_cells(cfg, seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds);
  } else if (a.preset == "batch" || a.preset.empty()) {
    SweepGrid grid;
    grid.seeds = seeds;
    grid.alphas = parse_list<double>(a.alphas, "--alphas");
    grid.betas = parse_list<double>(a.betas, "--betas");
    grid.gammas = parse_list<double>(a.gammas, "--gammas");
    grid.ks = parse_list<std::size_t>(a.ks, "--ks");
    grid.batch_sizes = parse_list<std::size_t>(a.batch_sizes, "--batch-sizes");
    if (a.preset == "batch" && grid.batch_sizes.empty()) grid.batch_sizes = {8, 16, 32, 64};
    cells = grid_cells(cfg, grid);
  } else {
    throw UsageError("--preset must be ablation or batch, got '" + a.preset + "'");
  }
  const auto dir = claim_dir(cfg.output_dir, o.force);
  write_config(cfg, dir);
  TeacherCache teachers;
  if (!a.teacher.empty()) teachers.put(cfg, load_teacher(load_checkpoint(a.teacher), cfg));
  std::size_t done = 0;
  const auto rows = run_sweep(cells, teachers, dir, [&](const SweepRow& r) {
    ++done;
    std::cout << "[" << done << "/" << cells.size() << "] " << r.name << " seed " << r.seed << ": ";
    if (r.status == "ok") std::cout << "test_accuracy " << r.final_test_accuracy << "\n";
    else std::cout << "error: " << r.error << "\n";
    std::cout.flush();
  });
  write_sweep_csv(rows, dir / "sweep.csv");
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  std::cout << "summary " << (dir / "sweep.csv").string() << " (" << rows.size() << " rows, " << failed
            << " failed)\n";
  return failed == rows.size() ? kNumeric : kOk;
}

int cmd_export(const Overrides& o, const std::string& ckpt_path, const std::string& split, std::string out) {
  const auto cfg = resolve(o);
  if (out.empty()) out = (fs::path(cfg.output_dir) / ("embeddings_" + split + ".csv")).string();
  if (fs::exists(out) && !o.force) throw UsageError(out + " exists (use --force to overwrite)");
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  const auto data = prepare_data(cfg);
  const auto net = load_any(ckpt_path, cfg);
  const auto& ds = pick_split(data, split);
  export_embeddings(net, ds, out);
  std::cout << "wrote " << ds.size() << " rows to " << out << "\n";
  return kOk;
}

int cmd_make_dataset(const Overrides& o, const std::string& out, const std::string& format) {
  const auto cfg = resolve(o);
  if (out.empty()) throw UsageError("make-dataset needs --out PATH");
  if (fs::exists(out) && !o.force) throw UsageError(out + " exists (use --force to overwrite)");
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  SynthSpec spec;
  spec.num_classes = cfg.num_classes;
  spec.per_class = cfg.synth_per_class;
  spec.channels = cfg.channels;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.noise = cfg.synth_noise;
  spec.seed = cfg.data_seed;
  const auto ds = synth_dataset(spec);
  save_dataset(ds, out, format.empty() ? format_from_path(out) : parse_dataset_format(format));
  std::cout << "wrote " << ds.size() << " images to " << out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token relationship graph distillation on toy networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "trg 0.1.0");

  Overrides o;
  std::string teacher_path, resume_path, ckpt_path, split = "test", out, format;
  std::size_t gc_seeds = 20;
  double gc_tol = 1e-4;
  SweepArgs sweep;

  auto* pretrain = app.add_subcommand("pretrain", "Train the teacher with cross-entropy");
  add_run_flags(pretrain, o);

  auto* distill_cmd = app.add_subcommand("distill", "Distill the student from a teacher checkpoint");
  add_run_flags(distill_cmd, o);
  distill_cmd->add_option("--teacher", teacher_path, "Teacher checkpoint");
  distill_cmd->add_option("--resume", resume_path, "Continue from a student checkpoint (last.ckpt)");

  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint on both splits");
  add_run_flags(eval, o);
  eval->add_option("--checkpoint", ckpt_path, "Teacher or student checkpoint")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gradcheck->add_option("--seeds", gc_seeds, "Random instances per loss")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", gc_tol, "Maximum relative error");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of distillation runs");
  add_run_flags(sweep_cmd, o);
  sweep_cmd->add_option("--preset", sweep.preset, "ablation (six loss configurations) or batch (8,16,32,64)");
  sweep_cmd->add_option("--seeds", sweep.seeds, "Comma list of seeds");
  sweep_cmd->add_option("--alphas", sweep.alphas, "Comma list");
  sweep_cmd->add_option("--betas", sweep.betas, "Comma list");
  sweep_cmd->add_option("--gammas", sweep.gammas, "Comma list");
  sweep_cmd->add_option("--ks", sweep.ks, "Comma list");
  sweep_cmd->add_option("--batch-sizes", sweep.batch_sizes, "Comma list");
  sweep_cmd->add_option("--teacher", sweep.teacher, "Teacher checkpoint to reuse instead of pretraining");

  auto* export_cmd = app.add_subcommand("export-embeddings", "Write penultimate features as CSV");
  add_run_flags(export_cmd, o);
  export_cmd->add_option("--checkpoint", ckpt_path, "Teacher or student checkpoint")->required();
  export_cmd->add_option("--split", split, "train or test");
  export_cmd->add_option("--out", out, "CSV path (default <output-dir>/embeddings_<split>.csv)");

  auto* make_ds = app.add_subcommand("make-dataset", "Write the synthetic dataset to a file");
  add_run_flags(make_ds, o);
  make_ds->add_option("--out", out, "Output path (.csv or binary)");
  make_ds->add_option("--format", format, "csv or binary (default from the extension)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*pretrain) return cmd_pretrain(o);
    if (*distill_cmd) return cmd_distill(o, teacher_path, resume_path);
    if (*eval) return cmd_eval(o, ckpt_path);
    if (*gradcheck) return cmd_gradcheck(gc_seeds, gc_tol);
    if (*sweep_cmd) return cmd_sweep(o, sweep);
    if (*export_cmd) return cmd_export(o, ckpt_path, split, out);
    if (*make_ds) return cmd_make_dataset(o, out, format);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
