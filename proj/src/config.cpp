#include "gsto/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gsto::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) {
    throw ConfigError("'" + key + "': cannot parse '" + v + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

template <typename N>
std::string fmt(N v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

train::SynthSpec::Range parse_range(const std::string& key, const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 2) throw ConfigError("'" + key + "': expected 'lo,hi', got '" + v + "'");
  return {parse_number<int>(key, parts[0]), parse_number<int>(key, parts[1])};
}

std::string fmt_range(const train::SynthSpec::Range& r) { return fmt(r.lo) + "," + fmt(r.hi); }

gated::GateMode parse_mode(const std::string& key, const std::string& v) {
  try {
    return gated::parse_gate_mode(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define NUM_FIELD(key, member, type)                                                   \
  {                                                                                    \
    key, Field {                                                                       \
      [](RunConfig& c, const std::string& k, const std::string& v) {                   \
        c.member = parse_number<type>(k, v);                                           \
      },                                                                               \
          [](const RunConfig& c) { return fmt(c.member); }                             \
    }                                                                                  \
  }
#define BOOL_FIELD(key, member)                                                                 \
  {                                                                                             \
    key, Field {                                                                                \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
          [](const RunConfig& c) { return fmt_bool(c.member); }                                 \
    }                                                                                           \
  }
#define STR_FIELD(key, member)                                                         \
  {                                                                                    \
    key, Field {                                                                       \
      [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; },   \
          [](const RunConfig& c) { return c.member; }                                  \
    }                                                                                  \
  }
#define MODE_FIELD(key, member)                                                          \
  {                                                                                      \
    key, Field {                                                                         \
      [](RunConfig& c, const std::string& k, const std::string& v) {                     \
        c.member = parse_mode(k, v);                                                     \
      },                                                                                 \
          [](const RunConfig& c) { return std::string(gated::to_string(c.member)); }     \
    }                                                                                    \
  }
#define RANGE_FIELD(key, member)                                                       \
  {                                                                                    \
    key, Field {                                                                       \
      [](RunConfig& c, const std::string& k, const std::string& v) {                   \
        c.member = parse_range(k, v);                                                  \
      },                                                                               \
          [](const RunConfig& c) { return fmt_range(c.member); }                       \
    }                                                                                  \
  }

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      NUM_FIELD("seed", seed, std::uint64_t),
      {"precision",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               if (v == "f32") {
                 c.precision = Precision::f32;
               } else if (v == "f64") {
                 c.precision = Precision::f64;
               } else {
                 throw ConfigError("'" + k + "': expected f32 or f64, got '" + v + "'");
               }
             },
             [](const RunConfig& c) { return std::string(to_string(c.precision)); }}},
      STR_FIELD("out", out),
      NUM_FIELD("net.width", net.width, int),
      NUM_FIELD("net.blocks", net.blocks, int),
      NUM_FIELD("net.classes", net.classes, int),
      MODE_FIELD("net.gfm", net.gfm_mode),
      MODE_FIELD("net.gtm1", net.gtm_modes[0]),
      MODE_FIELD("net.gtm2", net.gtm_modes[1]),
      MODE_FIELD("net.gtm3", net.gtm_modes[2]),
      {"net.transition",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               try {
                 c.net.transition = msnet::parse_transition(v);
               } catch (const std::invalid_argument& e) {
                 throw ConfigError("'" + k + "': " + e.what());
               }
             },
             [](const RunConfig& c) { return std::string(msnet::to_string(c.net.transition)); }}},
      BOOL_FIELD("net.stage1_aux_head", net.stage1_aux_head),
      NUM_FIELD("bn.momentum", net.bn_momentum, double),
      NUM_FIELD("bn.eps", net.bn_eps, double),
      {"loss.weights",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               const auto parts = split_list(v);
               if (parts.size() != 4) throw ConfigError("'" + k + "': expected four weights");
               for (int i = 0; i < 4; ++i) c.loss.stage_weights[i] = parse_number<double>(k, parts[i]);
             },
             [](const RunConfig& c) {
               std::string s;
               for (int i = 0; i < 4; ++i) s += (i ? "," : "") + fmt(c.loss.stage_weights[i]);
               return s;
             }}},
      NUM_FIELD("loss.ignore_index", loss.ignore_index, std::int32_t),
      BOOL_FIELD("loss.drop_loss1", loss.drop_loss1),
      NUM_FIELD("optim.lr", optim.base_lr, double),
      NUM_FIELD("optim.momentum", optim.momentum, double),
      NUM_FIELD("optim.weight_decay", optim.weight_decay, double),
      NUM_FIELD("optim.power", optim.power, double),
      NUM_FIELD("optim.iters", optim.max_iter, int),
      NUM_FIELD("optim.batch", batch, int),
      BOOL_FIELD("optim.flip", flip),
      NUM_FIELD("data.height", data.height, int),
      NUM_FIELD("data.width", data.width, int),
      NUM_FIELD("data.seed", data.seed, std::uint64_t),
      NUM_FIELD("data.n_train", data.n_train, int),
      NUM_FIELD("data.n_val", data.n_val, int),
      NUM_FIELD("data.noise", data.noise, double),
      NUM_FIELD("data.color_jitter", data.color_jitter, double),
      NUM_FIELD("data.disk_prob", data.disk_prob, double),
      RANGE_FIELD("data.large", data.counts[0]),
      RANGE_FIELD("data.medium", data.counts[1]),
      RANGE_FIELD("data.small", data.counts[2]),
      NUM_FIELD("log.every", log_every, int),
      NUM_FIELD("log.train_images", log_train_images, int),
      {"compare.variants",
       Field{[](RunConfig& c, const std::string& k, const std::string& v) {
               auto parts = split_list(v);
               if (parts.empty()) throw ConfigError("'" + k + "': no variants");
               for (const auto& p : parts) {
                 try {
                   variant_config(c.net, p);
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError("'" + k + "': " + e.what());
                 }
               }
               c.compare_variants = std::move(parts);
             },
             [](const RunConfig& c) {
               std::string s;
               for (std::size_t i = 0; i < c.compare_variants.size(); ++i) {
                 s += (i ? "," : "") + c.compare_variants[i];
               }
               return s;
             }}},
      NUM_FIELD("compare.seeds", compare_seeds, int),
      STR_FIELD("checkpoint", checkpoint),
      STR_FIELD("heatmap.image", heatmap_image),
      NUM_FIELD("heatmap.index", heatmap_index, int),
      NUM_FIELD("gradcheck.eps", gradcheck_eps, double),
      NUM_FIELD("gradcheck.tol_op", gradcheck_tol_op, double),
      NUM_FIELD("gradcheck.tol_e2e", gradcheck_tol_e2e, double),
      NUM_FIELD("gradcheck.samples", gradcheck_samples, int),
      NUM_FIELD("gradcheck.batch", gradcheck_batch, int),
      NUM_FIELD("gradcheck.width", gradcheck_width, int),
      NUM_FIELD("gradcheck.size", gradcheck_size, int),
      STR_FIELD("gradcheck.fault", gradcheck_fault),
      NUM_FIELD("gradcheck.fault_factor", gradcheck_fault_factor, double),
  };
  return table;
}

#undef NUM_FIELD
#undef BOOL_FIELD
#undef STR_FIELD
#undef MODE_FIELD
#undef RANGE_FIELD

const Field& field(const std::string& key) {
  static const std::map<std::string, const Field*> index = [] {
    std::map<std::string, const Field*> m;
    for (const auto& [k, f] : field_table()) m[k] = &f;
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it->second;
}

}  // namespace

const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, key, trim(value));
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : field_table()) out.push_back(k);
    return out;
  }();
  return ks;
}

void RunConfig::apply_text(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
  return out;
}

void RunConfig::finalize() {
  net.seed = seed;
  net.input_h = data.height;
  net.input_w = data.width;
  net.loss_weights = loss.stage_weights;
  if (net.classes != train::SynthSpec::kClasses) {
    throw ConfigError("net.classes must be " + std::to_string(train::SynthSpec::kClasses) +
                      " for the synthetic dataset");
  }
  if (batch < 1) throw ConfigError("optim.batch must be positive");
  if (log_every < 1) throw ConfigError("log.every must be positive");
  if (log_train_images < 0) throw ConfigError("log.train_images must be non-negative");
  if (compare_seeds < 1) throw ConfigError("compare.seeds must be positive");
  if (gradcheck_samples < 0) throw ConfigError("gradcheck.samples must be non-negative");
  if (gradcheck_batch < 1) throw ConfigError("gradcheck.batch must be positive");
  if (gradcheck_width < 1) throw ConfigError("gradcheck.width must be positive");
  if (!(gradcheck_eps > 0.0)) throw ConfigError("gradcheck.eps must be positive");
  try {
    net.validate();
    loss.validate();
    optim.validate();
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data.n_train < 1) throw ConfigError("data.n_train must be positive");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  c.apply_text(text);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.apply_text(ss.str(), path);
  return c;
}

msnet::NetConfig variant_config(const msnet::NetConfig& base, const std::string& variant) {
  using gated::GateMode;
  msnet::NetConfig c = base;
  c.transition = msnet::Transition::gtm;
  const GateMode none = GateMode::none;
  const GateMode unsup = GateMode::unsupervised;
  const GateMode sup = GateMode::supervised;
  if (variant == "baseline") {
    c.gfm_mode = none;
    c.gtm_modes = {none, none, none};
  } else if (variant == "gfm") {
    c.gfm_mode = unsup;
    c.gtm_modes = {none, none, none};
  } else if (variant == "gtm_unsup") {
    c.gfm_mode = none;
    c.gtm_modes = {unsup, unsup, unsup};
  } else if (variant == "gtm_sup") {
    c.gfm_mode = none;
    c.gtm_modes = {unsup, sup, sup};
  } else if (variant == "full") {
    c.gfm_mode = unsup;
    c.gtm_modes = {unsup, sup, sup};
  } else if (variant == "hrnet") {
    c.gfm_mode = none;
    c.gtm_modes = {none, none, none};
    c.transition = msnet::Transition::stride_conv;
  } else {
    throw std::invalid_argument("unknown variant '" + variant + "'");
  }
  return c;
}

}  // namespace gsto::cli
