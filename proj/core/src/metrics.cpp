#include "trg/metrics.hpp"

#include <cmath>
#include <iomanip>

#include <json.hpp>

#include "trg/errors.hpp"
#include "trg/ops.hpp"

namespace trg {

using nlohmann::json;

namespace {

json breakdown_json(const LossBreakdown& b) {
  return json{{"ce", b.ce_term},       {"kd", b.kd_term},         {"logit", b.logit_term},
              {"inner", b.inner_term}, {"local", b.local_term},   {"global", b.global_term},
              {"total", b.total},      {"lambda", b.lambda},      {"alpha", b.alpha},
              {"beta", b.beta},        {"gamma", b.gamma},        {"tau", b.tau},
              {"tau_g", b.tau_g}};
}

LossBreakdown breakdown_from(const json& j) {
  LossBreakdown b;
  b.ce_term = j.at("ce");
  b.kd_term = j.at("kd");
  b.logit_term = j.at("logit");
  b.inner_term = j.at("inner");
  b.local_term = j.at("local");
  b.global_term = j.at("global");
  b.total = j.at("total");
  b.lambda = j.at("lambda");
  b.alpha = j.at("alpha");
  b.beta = j.at("beta");
  b.gamma = j.at("gamma");
  b.tau = j.at("tau");
  b.tau_g = j.at("tau_g");
  return b;
}

}  // namespace

double mean_kld(const Tensor& teacher_features, const Tensor& student_features) {
  if (teacher_features.shape() != student_features.shape()) {
    throw DimensionError("mean_kld: teacher " + shape_str(teacher_features.shape()) + " vs student " +
                         shape_str(student_features.shape()));
  }
  NoGradGuard guard;
  const std::size_t n = teacher_features.dim(0), d = teacher_features.size() / n;
  auto t = ops::reshape(teacher_features.detach(), {n, d});
  auto s = ops::reshape(student_features.detach(), {n, d});
  return ops::kl_rows_from_logits(s, t).item();
}

double mul(const Tensor& tokens) {
  if (tokens.rank() != 2) throw DimensionError("mul: tokens must be [S x D], got " + shape_str(tokens.shape()));
  const std::size_t s = tokens.dim(0), d = tokens.dim(1);
  if (s < 2) throw UsageError("mul: needs at least 2 tokens, got " + std::to_string(s));
  const auto x = tokens.data();
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x[i * d + c] - x[j * d + c];
        acc += diff * diff;
      }
      total += 2.0 * acc;  // (i, j) and (j, i)
    }
  return total / static_cast<double>(s);
}

double mul(const TokenBatch& tokens) { return mul(tokens.tokens); }

std::string to_json_line(const MetricRecord& r) {
  json j{{"epoch", r.epoch},     {"split", r.split}, {"accuracy", r.accuracy},
         {"loss", breakdown_json(r.loss)},           {"mean_kld", r.mean_kld},
         {"mul", r.mul},         {"tau_g", r.tau_g}, {"lr", r.lr}};
  return j.dump();
}

MetricRecord parse_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics line: ") + e.what());
  }
  MetricRecord r;
  try {
    r.epoch = j.at("epoch");
    r.split = j.at("split");
    r.accuracy = j.at("accuracy");
    r.loss = breakdown_from(j.at("loss"));
    r.mean_kld = j.at("mean_kld");
    r.mul = j.at("mul");
    r.tau_g = j.at("tau_g");
    r.lr = j.at("lr");
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics record: ") + e.what());
  }
  return r;
}

MetricWriter::MetricWriter(const std::filesystem::path& dir, std::uint64_t config_hash, bool append)
    : path_(dir / "metrics.jsonl") {
  const auto mode = append ? std::ios::app : std::ios::trunc;
  jsonl_.open(path_, std::ios::out | mode);
  timing_.open(dir / "timing.csv", std::ios::out | mode);
  if (!jsonl_ || !timing_) throw IoError("cannot open metrics files in " + dir.string());
  if (!append) {
    json header{{"header", {{"config_hash", config_hash}, {"note", kMeanKldNote}}}};
    jsonl_ << header.dump() << '\n';
    timing_ << "epoch,split,wall_seconds\n";
  }
}

void MetricWriter::write(const MetricRecord& record) {
  if (!jsonl_.is_open()) throw UsageError("metric writer is not open");
  if (record.epoch < last_epoch_) throw UsageError("metric records must arrive in epoch order");
  last_epoch_ = record.epoch;
  jsonl_ << to_json_line(record) << '\n';
  jsonl_.flush();
  timing_ << record.epoch << ',' << record.split << ',' << std::setprecision(6) << record.wall_seconds << '\n';
  if (!jsonl_ || !timing_) throw IoError("write failed for " + path_.string());
}

std::vector<MetricRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("{\"header\"", 0) == 0) continue;
    out.push_back(parse_json_line(line));
  }
  return out;
}

}  // namespace trg
