#include "trg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "trg/errors.hpp"
#include "trg/graph.hpp"
#include "trg/ops.hpp"
#include "trg/schedule.hpp"
#include "trg/tokenization.hpp"

namespace trg {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffleTag = 0x5348;
constexpr std::uint64_t kStepTag = 0x5354;
constexpr std::uint64_t kEvalTag = 0x4556;
constexpr std::uint64_t kProjTag = 0x5052;
constexpr std::uint64_t kTeacherTag = 0x5445;

std::vector<std::size_t> iota_index(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// [B x M x D] -> [B x D] mean over each instance's tokens.
Tensor instance_means(const Tensor& tokens) {
  const std::size_t b = tokens.dim(0), m = tokens.dim(1), d = tokens.dim(2);
  std::vector<double> avg(b * b * m, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < m; ++j) avg[i * b * m + i * m + j] = 1.0 / static_cast<double>(m);
  return ops::matmul(Tensor({b, b * m}, std::move(avg)), ops::reshape(tokens, {b * m, d}));
}

TokenBatch graph_nodes(const Tensor& tokens, const SamplingPlan& plan, GraphLevel level, TokenSource source) {
  if (level == GraphLevel::token) return apply_plan(tokens, plan, source);
  TokenBatch nodes;
  nodes.tokens = instance_means(tokens);
  nodes.batch_size = tokens.dim(0);
  nodes.instance_index = iota_index(tokens.dim(0));
  nodes.source = source;
  return nodes;
}

NeighborRule rule_of(const RunConfig& cfg) { return cfg.neighbor_rule; }

// Running weighted mean of loss breakdowns.
struct BreakdownMean {
  LossBreakdown sum;
  double weight = 0.0;

  void add(const LossBreakdown& b, double w) {
    if (weight == 0.0) {
      sum = b;
      sum.ce_term = sum.kd_term = sum.logit_term = sum.inner_term = sum.local_term = sum.global_term =
          sum.total = 0.0;
    }
    sum.ce_term += w * b.ce_term;
    sum.kd_term += w * b.kd_term;
    sum.logit_term += w * b.logit_term;
    sum.inner_term += w * b.inner_term;
    sum.local_term += w * b.local_term;
    sum.global_term += w * b.global_term;
    sum.total += w * b.total;
    weight += w;
  }

  LossBreakdown mean() const {
    LossBreakdown m = sum;
    if (weight > 0.0) {
      for (double* f : {&m.ce_term, &m.kd_term, &m.logit_term, &m.inner_term, &m.local_term,
                        &m.global_term, &m.total}) {
        *f /= weight;
      }
    }
    return m;
  }
};

std::string engine_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> raw;
  raw.reserve(2 + 2 * words.size());
  auto push = [&raw](std::uint64_t w) {
    raw.push_back(static_cast<std::uint32_t>(w));
    raw.push_back(static_cast<std::uint32_t>(w >> 32));
  };
  push(seed);
  for (auto w : words) push(w);
  std::seed_seq seq(raw.begin(), raw.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

SplitDataset prepare_data(const RunConfig& cfg) {
  LabeledDataset ds;
  if (cfg.dataset == "synth") {
    SynthSpec spec;
    spec.num_classes = cfg.num_classes;
    spec.per_class = cfg.synth_per_class;
    spec.channels = cfg.channels;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.noise = cfg.synth_noise;
    spec.seed = cfg.data_seed;
    ds = synth_dataset(spec);
  } else {
    const std::filesystem::path path(cfg.dataset);
    if (!std::filesystem::exists(path)) {
      throw IoError("config field 'dataset': no file at " + cfg.dataset + " (use \"synth\" for generated data)");
    }
    const auto format = cfg.dataset_format == "auto" ? format_from_path(path) : parse_dataset_format(cfg.dataset_format);
    ds = load_dataset(path, format, CsvLayout{cfg.num_classes, cfg.channels, cfg.height, cfg.width});
    if (ds.num_classes != cfg.num_classes || ds.channels() != cfg.channels || ds.height() != cfg.height ||
        ds.width() != cfg.width) {
      throw ConfigError("dataset " + cfg.dataset + " has K=" + std::to_string(ds.num_classes) + " and images " +
                        shape_str({ds.channels(), ds.height(), ds.width()}) +
                        ", which disagrees with config fields num_classes/channels/height/width");
    }
  }
  auto split = stratified_split(ds, cfg.train_fraction, cfg.data_seed);
  if (cfg.imbalance_rate > 1.0) {
    split.train = long_tail_subsample(split.train, cfg.imbalance_rate, cfg.data_seed);
    split.train.split = "train";
  }
  return split;
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("predict: logits must be [B x K], got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  const auto z = logits.data();
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (z[i * k + c] > z[i * k + best]) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
  const auto pred = predict(logits);
  if (pred.size() != labels.size() || pred.empty()) {
    throw DimensionError("accuracy: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double evaluate(const ToyNet& net, const LabeledDataset& ds, std::size_t batch_size) {
  if (ds.size() == 0) throw UsageError("evaluate: empty split");
  NoGradGuard guard;
  std::size_t hit = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t stop = std::min(ds.size(), start + batch_size);
    std::vector<std::size_t> index(stop - start);
    std::iota(index.begin(), index.end(), start);
    const auto labels = ds.batch_labels(index);
    const auto pred = predict(net.forward(ds.batch_images(index)).logits);
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (n < 2) throw UsageError("training needs at least 2 examples");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  auto order = iota_index(n);
  std::mt19937_64 rng(derive_seed(seed, {kShuffleTag, epoch}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  if (n < batch_size) {
    batches.push_back(std::move(order));
    return batches;
  }
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(start + batch_size));
  }
  return batches;
}

PretrainResult pretrain_teacher(ToyNet& net, const LabeledDataset& train, const RunConfig& cfg,
                                const LabeledDataset* test) {
  if (train.size() == 0) throw UsageError("pretrain_teacher: empty dataset");
  const auto sched = cfg.teacher_lr_schedule();
  Sgd opt(net.parameters(), {cfg.momentum, cfg.weight_decay, true});
  PretrainResult result;
  const std::uint64_t seed = derive_seed(cfg.teacher_seed, {kTeacherTag});
  for (std::size_t epoch = 1; epoch <= cfg.teacher_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate(sched, epoch);
    BreakdownMean mean;
    std::size_t hit = 0, seen = 0;
    for (const auto& index : epoch_batches(train.size(), cfg.batch_size, seed, epoch)) {
      const auto labels = train.batch_labels(index);
      const auto out = net.forward(train.batch_images(index));
      auto loss = ops::cross_entropy(out.logits, labels);
      if (!std::isfinite(loss.item())) {
        throw NumericError("teacher pretraining diverged at epoch " + std::to_string(epoch) +
                           ": cross-entropy is " + std::to_string(loss.item()) + " (lr " + std::to_string(lr) + ")");
      }
      LossBreakdown b;
      b.ce_term = b.logit_term = b.total = loss.item();
      mean.add(b, static_cast<double>(index.size()));
      const auto pred = predict(out.logits);
      for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
      seen += pred.size();
      opt.zero_grad();
      backward(loss);
      opt.step(lr);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MetricRecord rec;
    rec.epoch = epoch;
    rec.split = "train";
    rec.accuracy = static_cast<double>(hit) / static_cast<double>(seen);
    rec.loss = mean.mean();
    rec.lr = lr;
    rec.wall_seconds = wall;
    result.records.push_back(rec);
    if (test) {
      MetricRecord t = rec;
      t.split = "test";
      t.accuracy = evaluate(net, *test);
      t.loss = {};
      result.records.push_back(t);
    }
  }
  net.freeze();
  result.train_accuracy = evaluate(net, train);
  return result;
}

ToyNet make_teacher(const RunConfig& cfg) { return ToyNet(cfg.teacher_net, cfg.input_shape(), cfg.teacher_seed); }

ToyNet make_student(const RunConfig& cfg) { return ToyNet(cfg.student_net, cfg.input_shape(), cfg.seed); }

Projection make_projection(const RunConfig& cfg, const ToyNet& teacher, const ToyNet& student) {
  const auto ft = teacher.feature_shape(), fs = student.feature_shape();
  const std::size_t pt = feature_patch_size(ft[1], ft[2], cfg.token_count);
  const std::size_t ps = feature_patch_size(fs[1], fs[2], cfg.token_count);
  return Projection(fs[0] * ps * ps, ft[0] * pt * pt, derive_seed(cfg.seed, {kProjTag}));
}

Checkpoint teacher_checkpoint(const ToyNet& teacher, const RunConfig& cfg) {
  Checkpoint c;
  c.kind = "teacher";
  c.meta = teacher.spec().str();
  c.config_hash = teacher_config_hash(cfg);
  c.epoch = cfg.teacher_epochs;
  for (std::size_t i = 0; i < teacher.parameters().size(); ++i) {
    c.blobs.push_back(to_blob("teacher." + teacher.parameter_names()[i], teacher.parameters()[i]));
  }
  return c;
}

ToyNet load_teacher(const Checkpoint& ckpt, const RunConfig& cfg) {
  if (ckpt.kind != "teacher") throw ConfigError("expected a teacher checkpoint, got kind '" + ckpt.kind + "'");
  if (ckpt.config_hash != teacher_config_hash(cfg)) {
    throw ConfigError("teacher checkpoint was trained with different data/teacher settings (hash " +
                      std::to_string(ckpt.config_hash) + ", config expects " +
                      std::to_string(teacher_config_hash(cfg)) + ")");
  }
  ToyNet net = make_teacher(cfg);
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    load_blob(ckpt.find("teacher." + net.parameter_names()[i]), net.parameters()[i]);
  }
  net.freeze();
  return net;
}

ToyNet load_student(const Checkpoint& ckpt, const RunConfig& cfg) {
  if (ckpt.kind != "student") throw ConfigError("expected a student checkpoint, got kind '" + ckpt.kind + "'");
  if (ckpt.meta != cfg.student_net.str()) {
    throw ConfigError("checkpoint holds student net '" + ckpt.meta + "' but config field student_net is '" +
                      cfg.student_net.str() + "'");
  }
  ToyNet net = make_student(cfg);
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    load_blob(ckpt.find("student." + net.parameter_names()[i]), net.parameters()[i]);
  }
  return net;
}

Objective compute_objective(const ToyNet& teacher, const ToyNet& student, const Projection& proj,
                            const Tensor& images, std::span<const int> labels, const RunConfig& cfg,
                            std::size_t epoch, std::uint64_t plan_seed) {
  const std::size_t b = images.dim(0);
  if (b < 2) throw UsageError("distillation batch needs at least 2 instances");
  ForwardResult t_out;
  {
    NoGradGuard guard;
    t_out = teacher.forward(images);
  }
  const auto s_out = student.forward(images);

  Objective obj;
  obj.student_logits = s_out.logits;
  LossTerms terms;
  double ce = 0.0, kd = 0.0;
  if (cfg.term_enabled(LossTerm::kd)) {
    auto parts = logit_loss(s_out.logits, t_out.logits, labels, cfg.tau, cfg.lambda, cfg.tau_squared);
    terms.logit = parts.total;
    ce = parts.ce.item();
    kd = parts.kd.item();
  } else {
    terms.logit = ops::cross_entropy(s_out.logits, labels);
    ce = terms.logit.item();
  }

  const auto t_tokens = patch_feature_maps(t_out.features, cfg.token_count);  // [B x M x Dt]
  const auto s_tokens = patch_feature_maps(s_out.features, cfg.token_count);  // [B x M x Ds]
  if (cfg.term_enabled(LossTerm::inner)) {
    terms.inner = inner_loss(contextual_similarity(t_tokens), contextual_similarity(s_tokens));
  }

  const std::size_t m = t_tokens.dim(1);
  const auto plan = make_sampling_plan(b, m, std::min(b * m, cfg.tokens_per_instance * b), plan_seed);
  const auto t_nodes = graph_nodes(t_tokens, plan, cfg.graph_level, TokenSource::teacher);
  const auto s_nodes = graph_nodes(s_tokens, plan, cfg.graph_level, TokenSource::student);

  if (cfg.term_enabled(LossTerm::local)) {
    const auto g_t = build_token_graph(t_nodes, cfg.k, cfg.sigma, rule_of(cfg));
    const auto g_s = build_token_graph(s_nodes, cfg.k, SigmaPolicy::fixed(g_t.sigma), rule_of(cfg));
    terms.local = local_loss(g_s, g_t, cfg.local_softmax);
  }
  const double tau_g = graph_temperature(cfg.temperature_schedule(), epoch);
  if (cfg.term_enabled(LossTerm::global)) {
    terms.global = global_loss(token_similarity(s_nodes.tokens, t_nodes.tokens, proj), tau_g);
  }

  obj.total = total_loss(terms, {cfg.alpha, cfg.beta, cfg.gamma});
  auto& br = obj.total.breakdown;
  br.ce_term = ce;
  br.kd_term = kd;
  br.lambda = cfg.term_enabled(LossTerm::kd) ? cfg.lambda : 0.0;
  br.tau = cfg.tau;
  br.tau_g = tau_g;

  {
    NoGradGuard guard;
    const std::size_t ds = s_tokens.dim(2);
    auto projected = proj.apply(ops::reshape(s_tokens.detach(), {b * m, ds}));
    obj.mean_kld = mean_kld(ops::reshape(t_tokens, {b, t_tokens.size() / b}),
                            ops::reshape(projected, {b, projected.size() / b}));
    obj.mul = mul(s_nodes.tokens.detach());
  }
  return obj;
}

LossBreakdown distill_step(const ToyNet& teacher, ToyNet& student, const Projection& proj, Sgd& optimizer,
                           const Tensor& images, std::span<const int> labels, const RunConfig& cfg,
                           std::size_t epoch, std::uint64_t plan_seed) {
  if (!teacher.frozen()) throw UsageError("distill_step: teacher must be frozen");
  auto obj = compute_objective(teacher, student, proj, images, labels, cfg, epoch, plan_seed);
  const auto& br = obj.total.breakdown;
  if (!std::isfinite(br.total)) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << ": ce=" << br.ce_term << " kd=" << br.kd_term
       << " inner=" << br.inner_term << " local=" << br.local_term << " global=" << br.global_term;
    throw NumericError(os.str());
  }
  optimizer.zero_grad();
  backward(obj.total.value);
  optimizer.step(learning_rate(cfg.lr_schedule(), epoch));
  return br;
}

namespace {

std::vector<Tensor> optimized_parameters(ToyNet& student, Projection& proj) {
  auto params = student.parameters();
  params.push_back(proj.weight());
  return params;
}

}  // namespace

Distiller::Distiller(const ToyNet& teacher, ToyNet student, const SplitDataset& data, RunConfig cfg)
    : teacher_(teacher),
      student_(std::move(student)),
      proj_(make_projection(cfg, teacher, student_)),
      optimizer_(optimized_parameters(student_, proj_), {cfg.momentum, cfg.weight_decay, true}),
      data_(data),
      cfg_(std::move(cfg)),
      rng_(derive_seed(cfg_.seed, {kStepTag})) {
  cfg_.validate();
  if (!teacher_.frozen()) throw UsageError("distillation needs a frozen teacher");
  if (data_.train.size() < 2 || data_.test.size() == 0) throw UsageError("distillation needs train and test data");
  state_.config_hash = config_hash(cfg_);
}

MetricRecord Distiller::evaluate_split(const LabeledDataset& ds, std::size_t epoch) const {
  NoGradGuard guard;
  MetricRecord rec;
  rec.epoch = epoch;
  rec.split = ds.split;
  BreakdownMean mean;
  double kld = 0.0, mul_sum = 0.0;
  std::size_t hit = 0, batches = 0;
  const std::size_t bs = cfg_.batch_size;
  for (std::size_t start = 0; start < ds.size();) {
    std::size_t stop = std::min(ds.size(), start + bs);
    if (ds.size() - stop < 2) stop = ds.size();  // fold a 1-example tail into this batch
    std::vector<std::size_t> index(stop - start);
    std::iota(index.begin(), index.end(), start);
    const auto labels = ds.batch_labels(index);
    const auto obj = compute_objective(teacher_, student_, proj_, ds.batch_images(index), labels, cfg_, epoch,
                                       derive_seed(cfg_.seed, {kEvalTag, epoch, batches}));
    const double w = static_cast<double>(index.size());
    mean.add(obj.total.breakdown, w);
    kld += w * obj.mean_kld;
    mul_sum += obj.mul;
    const auto pred = predict(obj.student_logits);
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    ++batches;
    start = stop;
  }
  rec.accuracy = static_cast<double>(hit) / static_cast<double>(ds.size());
  rec.loss = mean.mean();
  rec.mean_kld = kld / static_cast<double>(ds.size());
  rec.mul = mul_sum / static_cast<double>(batches);
  rec.tau_g = rec.loss.tau_g;
  rec.lr = learning_rate(cfg_.lr_schedule(), epoch);
  return rec;
}

std::vector<MetricRecord> Distiller::run_epoch() {
  const std::size_t epoch = state_.epoch + 1;
  const auto t0 = std::chrono::steady_clock::now();
  MetricRecord train;
  train.epoch = epoch;
  train.split = "train";
  BreakdownMean mean;
  double kld = 0.0, mul_sum = 0.0;
  std::size_t hit = 0, seen = 0, steps = 0;
  for (const auto& index : epoch_batches(data_.train.size(), cfg_.batch_size, cfg_.seed, epoch)) {
    const auto labels = data_.train.batch_labels(index);
    const auto images = data_.train.batch_images(index);
    const std::uint64_t plan_seed = rng_();
    auto obj = compute_objective(teacher_, student_, proj_, images, labels, cfg_, epoch, plan_seed);
    const auto& br = obj.total.breakdown;
    if (!std::isfinite(br.total)) {
      std::ostringstream os;
      os << "non-finite loss at epoch " << epoch << " step " << state_.step + 1 << ": ce=" << br.ce_term
         << " kd=" << br.kd_term << " inner=" << br.inner_term << " local=" << br.local_term
         << " global=" << br.global_term;
      throw NumericError(os.str());
    }
    optimizer_.zero_grad();
    backward(obj.total.value);
    optimizer_.step(learning_rate(cfg_.lr_schedule(), epoch));
    ++state_.step;
    const double w = static_cast<double>(index.size());
    mean.add(br, w);
    kld += w * obj.mean_kld;
    mul_sum += obj.mul;
    const auto pred = predict(obj.student_logits);
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    seen += pred.size();
    ++steps;
  }
  train.accuracy = static_cast<double>(hit) / static_cast<double>(seen);
  train.loss = mean.mean();
  train.mean_kld = kld / static_cast<double>(seen);
  train.mul = mul_sum / static_cast<double>(steps);
  train.tau_g = train.loss.tau_g;
  train.lr = learning_rate(cfg_.lr_schedule(), epoch);
  const auto t1 = std::chrono::steady_clock::now();
  train.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  auto test = evaluate_split(data_.test, epoch);
  test.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();

  state_.epoch = epoch;
  if (test.accuracy > state_.best_accuracy) {
    state_.best_accuracy = test.accuracy;
    state_.best_epoch = epoch;
  }
  return {train, test};
}

Checkpoint Distiller::checkpoint() const {
  Checkpoint c;
  c.kind = "student";
  c.meta = student_.spec().str();
  c.config_hash = state_.config_hash;
  c.epoch = state_.epoch;
  c.step = state_.step;
  c.best_accuracy = state_.best_accuracy;
  c.best_epoch = state_.best_epoch;
  c.rng_state = engine_state(rng_);
  const auto& names = student_.parameter_names();
  const auto& params = student_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) c.blobs.push_back(to_blob("student." + names[i], params[i]));
  c.blobs.push_back(to_blob("proj.weight", proj_.weight()));
  const auto& bufs = optimizer_.momentum_buffers();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.blobs.push_back(to_blob("momentum.student." + names[i], params[i].shape(), bufs[i]));
  }
  c.blobs.push_back(to_blob("momentum.proj.weight", proj_.weight().shape(), bufs.back()));
  return c;
}

void Distiller::restore(const Checkpoint& ckpt) {
  if (ckpt.kind != "student") throw ConfigError("expected a student checkpoint, got kind '" + ckpt.kind + "'");
  if (ckpt.config_hash != state_.config_hash) {
    throw ConfigError("checkpoint was written by a different configuration (hash " +
                      std::to_string(ckpt.config_hash) + ", current " + std::to_string(state_.config_hash) + ")");
  }
  auto& params = student_.parameters();
  const auto& names = student_.parameter_names();
  auto& bufs = optimizer_.momentum_buffers();
  for (std::size_t i = 0; i < params.size(); ++i) {
    load_blob(ckpt.find("student." + names[i]), params[i]);
    const auto& m = ckpt.find("momentum.student." + names[i]);
    if (m.values.size() != bufs[i].size()) throw DimensionError("momentum buffer size mismatch for " + names[i]);
    bufs[i] = m.values;
  }
  Tensor w = proj_.weight();
  load_blob(ckpt.find("proj.weight"), w);
  const auto& pm = ckpt.find("momentum.proj.weight");
  if (pm.values.size() != bufs.back().size()) throw DimensionError("momentum buffer size mismatch for proj.weight");
  bufs.back() = pm.values;
  std::istringstream is(ckpt.rng_state);
  is >> rng_;
  if (!is) throw ParseError("checkpoint RNG state is unreadable");
  state_.epoch = ckpt.epoch;
  state_.step = ckpt.step;
  state_.best_accuracy = ckpt.best_accuracy;
  state_.best_epoch = ckpt.best_epoch;
}

void write_summary_csv(const std::vector<MetricRecord>& records, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "epoch,split,accuracy,ce,kd,inner,local,global,total,mean_kld,mul,tau_g,lr\n" << std::setprecision(17);
  if (records.empty()) return;
  const std::size_t last = records.back().epoch;
  for (const auto& r : records) {
    if (r.epoch != last) continue;
    os << r.epoch << ',' << r.split << ',' << r.accuracy << ',' << r.loss.ce_term << ',' << r.loss.kd_term << ','
       << r.loss.inner_term << ',' << r.loss.local_term << ',' << r.loss.global_term << ',' << r.loss.total << ','
       << r.mean_kld << ',' << r.mul << ',' << r.tau_g << ',' << r.lr << '\n';
  }
  if (!os) throw IoError("write failed for " + path.string());
}

DistillResult distill(const ToyNet& teacher, ToyNet student, const SplitDataset& data, const RunConfig& cfg,
                      const std::filesystem::path& output_dir, const Checkpoint* resume) {
  require_smaller(student, teacher);
  Distiller run(teacher, std::move(student), data, cfg);
  if (resume) run.restore(*resume);
  const bool write = !output_dir.empty();
  MetricWriter writer;
  if (write) {
    std::filesystem::create_directories(output_dir);
    writer = MetricWriter(output_dir, run.state().config_hash, resume != nullptr);
  }
  DistillResult result;
  while (run.state().epoch < cfg.epochs) {
    const double prev_best = run.state().best_accuracy;
    const auto recs = run.run_epoch();
    for (const auto& r : recs) {
      if (write) writer.write(r);
      result.records.push_back(r);
    }
    if (write) {
      const auto ckpt = run.checkpoint();
      save_checkpoint(ckpt, output_dir / "last.ckpt");
      if (run.state().best_accuracy > prev_best) save_checkpoint(ckpt, output_dir / "best.ckpt");
    }
  }
  if (write) write_summary_csv(result.records, output_dir / "summary.csv");
  result.state = run.state();
  for (const auto& p : run.student().parameters()) result.student_parameters.push_back(p.clone());
  result.student_parameters.push_back(run.projection().weight().clone());
  return result;
}

void export_embeddings(const ToyNet& net, const LabeledDataset& ds, const std::filesystem::path& path) {
  if (ds.size() == 0) throw UsageError("export_embeddings: empty dataset");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  const std::size_t d = numel(net.feature_shape());
  os << "label";
  for (std::size_t j = 0; j < d; ++j) os << ",f" << j;
  os << '\n' << std::setprecision(17);
  NoGradGuard guard;
  for (std::size_t start = 0; start < ds.size(); start += 256) {
    const std::size_t stop = std::min(ds.size(), start + 256);
    std::vector<std::size_t> index(stop - start);
    std::iota(index.begin(), index.end(), start);
    const auto out = net.forward(ds.batch_images(index));
    const auto feats = out.features.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
      os << ds.labels[index[i]];
      for (std::size_t j = 0; j < d; ++j) os << ',' << feats[i * d + j];
      os << '\n';
    }
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Embeddings read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) throw ParseError(path.string() + ": missing header");
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  Embeddings e;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(is, cell, ',')) {
      try {
        if (col == 0) e.labels.push_back(std::stoi(cell));
        else values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
      ++col;
    }
    if (col != d + 1) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
  }
  if (e.labels.empty()) throw ParseError(path.string() + ": no rows");
  e.features = Tensor({e.labels.size(), d}, std::move(values));
  return e;
}

}  // namespace trg
