#include "trg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "trg/errors.hpp"

namespace trg {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw ConfigError("config field '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError("config field '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config field '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define TRG_DOUBLE(name)                                                      \
  Field {                                                                     \
    #name, [](const RunConfig& c) { return fmt_double(c.name); },             \
        [](RunConfig& c, const std::string& v) { c.name = to_double(#name, v); } \
  }
#define TRG_SIZE(name)                                                        \
  Field {                                                                     \
    #name, [](const RunConfig& c) { return std::to_string(c.name); },         \
        [](RunConfig& c, const std::string& v) {                              \
          c.name = static_cast<decltype(c.name)>(to_uint(#name, v));          \
        }                                                                     \
  }
#define TRG_STRING(name)                                                      \
  Field {                                                                     \
    #name, [](const RunConfig& c) { return c.name; },                         \
        [](RunConfig& c, const std::string& v) { c.name = v; }                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TRG_STRING(dataset),
      TRG_STRING(dataset_format),
      TRG_SIZE(num_classes),
      TRG_SIZE(channels),
      TRG_SIZE(height),
      TRG_SIZE(width),
      TRG_SIZE(synth_per_class),
      TRG_DOUBLE(synth_noise),
      TRG_SIZE(data_seed),
      TRG_DOUBLE(train_fraction),
      TRG_DOUBLE(imbalance_rate),
      Field{"teacher_net", [](const RunConfig& c) { return c.teacher_net.str(); },
            [](RunConfig& c, const std::string& v) { c.teacher_net = NetSpec::parse(v); }},
      Field{"student_net", [](const RunConfig& c) { return c.student_net.str(); },
            [](RunConfig& c, const std::string& v) { c.student_net = NetSpec::parse(v); }},
      TRG_SIZE(teacher_epochs),
      TRG_DOUBLE(teacher_lr),
      TRG_SIZE(teacher_seed),
      TRG_SIZE(seed),
      TRG_SIZE(epochs),
      TRG_SIZE(batch_size),
      TRG_DOUBLE(lr),
      TRG_DOUBLE(lr_warmup_frac),
      Field{"lr_milestone_fracs",
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.lr_milestone_fracs.size(); ++i)
                s += (i ? "," : "") + fmt_double(c.lr_milestone_fracs[i]);
              return s;
            },
            [](RunConfig& c, const std::string& v) {
              c.lr_milestone_fracs.clear();
              for (const auto& item : split_list(v)) c.lr_milestone_fracs.push_back(to_double("lr_milestone_fracs", item));
            }},
      TRG_DOUBLE(lr_decay),
      TRG_DOUBLE(momentum),
      TRG_DOUBLE(weight_decay),
      TRG_DOUBLE(tau),
      TRG_DOUBLE(lambda),
      Field{"tau_squared", [](const RunConfig& c) { return std::string(c.tau_squared ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) { c.tau_squared = to_bool("tau_squared", v); }},
      TRG_DOUBLE(alpha),
      TRG_DOUBLE(beta),
      TRG_DOUBLE(gamma),
      TRG_DOUBLE(tau_g),
      TRG_DOUBLE(warmup_frac),
      TRG_DOUBLE(tau_g_floor),
      TRG_DOUBLE(kl_eps),
      Field{"ablate",
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.ablate.size(); ++i) s += (i ? "," : "") + std::string(to_string(c.ablate[i]));
              return s;
            },
            [](RunConfig& c, const std::string& v) {
              c.ablate.clear();
              for (const auto& item : split_list(v)) {
                const auto term = parse_loss_term(item);
                if (std::find(c.ablate.begin(), c.ablate.end(), term) == c.ablate.end()) c.ablate.push_back(term);
              }
              std::sort(c.ablate.begin(), c.ablate.end());
            }},
      TRG_SIZE(token_count),
      TRG_SIZE(tokens_per_instance),
      TRG_SIZE(k),
      Field{"sigma", [](const RunConfig& c) { return c.sigma.str(); },
            [](RunConfig& c, const std::string& v) { c.sigma = SigmaPolicy::parse(v); }},
      Field{"neighbor_rule",
            [](const RunConfig& c) {
              return std::string(c.neighbor_rule == NeighborRule::union_of_picks ? "union" : "mutual");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "union") c.neighbor_rule = NeighborRule::union_of_picks;
              else if (v == "mutual") c.neighbor_rule = NeighborRule::mutual;
              else throw ConfigError("config field 'neighbor_rule': expected union or mutual, got '" + v + "'");
            }},
      Field{"local_softmax",
            [](const RunConfig& c) {
              return std::string(c.local_softmax == LocalSoftmax::full_row ? "full" : "neighbors");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "full") c.local_softmax = LocalSoftmax::full_row;
              else if (v == "neighbors") c.local_softmax = LocalSoftmax::neighbors_only;
              else throw ConfigError("config field 'local_softmax': expected full or neighbors, got '" + v + "'");
            }},
      Field{"graph_level",
            [](const RunConfig& c) { return std::string(c.graph_level == GraphLevel::token ? "token" : "instance"); },
            [](RunConfig& c, const std::string& v) {
              if (v == "token") c.graph_level = GraphLevel::token;
              else if (v == "instance") c.graph_level = GraphLevel::instance;
              else throw ConfigError("config field 'graph_level': expected token or instance, got '" + v + "'");
            }},
      TRG_STRING(output_dir),
      TRG_STRING(teacher_checkpoint),
  };
  return table;
}

#undef TRG_DOUBLE
#undef TRG_SIZE
#undef TRG_STRING

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config field '" + key + "'");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t scaled_epochs(double frac, std::size_t epochs) {
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(epochs)));
}

}  // namespace

const char* to_string(LossTerm term) {
  switch (term) {
    case LossTerm::kd: return "kd";
    case LossTerm::inner: return "inner";
    case LossTerm::local: return "local";
    case LossTerm::global: return "global";
  }
  return "?";
}

LossTerm parse_loss_term(const std::string& text) {
  if (text == "kd") return LossTerm::kd;
  if (text == "inner") return LossTerm::inner;
  if (text == "local") return LossTerm::local;
  if (text == "global") return LossTerm::global;
  throw ConfigError("unknown loss term '" + text + "' (expected kd, inner, local or global)");
}

bool RunConfig::term_enabled(LossTerm term) const {
  return std::find(ablate.begin(), ablate.end(), term) == ablate.end();
}

std::size_t RunConfig::graph_warmup_epochs() const {
  return std::max<std::size_t>(2, scaled_epochs(warmup_frac, epochs));
}

TemperatureSchedule RunConfig::temperature_schedule() const {
  return {tau_g, graph_warmup_epochs(), tau_g_floor};
}

LrSchedule RunConfig::lr_schedule() const {
  LrSchedule s;
  s.initial_lr = lr;
  s.decay_factor = lr_decay;
  s.warmup_epochs = scaled_epochs(lr_warmup_frac, epochs);
  s.milestones.clear();
  for (double f : lr_milestone_fracs) s.milestones.push_back(scaled_epochs(f, epochs));
  return s;
}

LrSchedule RunConfig::teacher_lr_schedule() const {
  LrSchedule s;
  s.initial_lr = teacher_lr;
  s.decay_factor = lr_decay;
  s.warmup_epochs = scaled_epochs(lr_warmup_frac, teacher_epochs);
  s.milestones.clear();
  for (double f : lr_milestone_fracs) s.milestones.push_back(scaled_epochs(f, teacher_epochs));
  return s;
}

InputShape RunConfig::input_shape() const { return {channels, height, width, num_classes}; }

void RunConfig::validate() const {
  if (dataset.empty()) throw ConfigError("config field 'dataset' is required (\"synth\" or a file path)");
  if (num_classes < 2) throw ConfigError("config field 'num_classes' must be >= 2");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("config fields 'channels/height/width' must be positive");
  if (epochs == 0) throw ConfigError("config field 'epochs' must be positive");
  if (batch_size < 2) throw ConfigError("config field 'batch_size' must be >= 2");
  if (lr < 0.0) throw ConfigError("config field 'lr' must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("config field 'tau' must be positive");
  if (!(tau_g > 0.0)) throw ConfigError("config field 'tau_g' must be positive");
  if (lambda < 0.0) throw ConfigError("config field 'lambda' must be non-negative");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("config fields 'alpha/beta/gamma' must be non-negative");
  if (!(imbalance_rate >= 1.0)) throw ConfigError("config field 'imbalance_rate' must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("config field 'train_fraction' must be in (0,1)");
  if (k == 0) throw ConfigError("config field 'k' must be positive");
  if (token_count == 0) throw ConfigError("config field 'token_count' must be positive");
  if (tokens_per_instance == 0 || tokens_per_instance > token_count) {
    throw ConfigError("config field 'tokens_per_instance' must be in [1, token_count]");
  }
  if (graph_level == GraphLevel::token && tokens_per_instance * batch_size <= k) {
    throw ConfigError("config field 'k' must be smaller than the sampled token count");
  }
  if (graph_level == GraphLevel::instance && batch_size <= k) {
    throw ConfigError("config field 'k' must be smaller than the batch size for instance graphs");
  }
  temperature_schedule().validate();
  lr_schedule().validate();
  if (output_dir.empty()) throw ConfigError("config field 'output_dir' is required");
}

std::vector<std::pair<std::string, std::string>> config_schema() {
  const RunConfig defaults;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(defaults));
  return out;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return find_field(key).get(cfg);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), std::move(base));
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // Where a run writes its files does not change what it computes.
  RunConfig c = cfg;
  c.output_dir.clear();
  c.teacher_checkpoint.clear();
  return fnv1a(serialize_config(c));
}

std::uint64_t teacher_config_hash(const RunConfig& cfg) {
  std::string s;
  for (const char* key : {"dataset", "dataset_format", "num_classes", "channels", "height", "width",
                          "synth_per_class", "synth_noise", "data_seed", "train_fraction",
                          "imbalance_rate", "teacher_net", "teacher_epochs", "teacher_lr",
                          "teacher_seed", "lr_warmup_frac", "lr_milestone_fracs", "lr_decay",
                          "momentum", "weight_decay"}) {
    s += std::string(key) + "=" + get_config_value(cfg, key) + "\n";
  }
  return fnv1a(s);
}

}  // namespace trg
