#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsto/loss.hpp"
#include "gsto/msnet.hpp"
#include "gsto/optim.hpp"
#include "gsto/synth.hpp"

namespace gsto::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };

/// Fully resolved run configuration. The text form is one `key = value` per
/// line with `#` comments; see keys() for the accepted set.
struct RunConfig {
  std::uint64_t seed = 1;  // parameter init, batch order and augmentation
  Precision precision = Precision::f32;
  std::string out = "run";

  msnet::NetConfig net;
  train::LossSpec loss;
  train::OptimState optim{.base_lr = 0.05, .weight_decay = 5e-4, .max_iter = 400};
  int batch = 8;
  bool flip = false;
  train::SynthSpec data;

  int log_every = 50;
  int log_train_images = 64;  // train images scored at each log point

  std::vector<std::string> compare_variants{"baseline", "gfm", "gtm_unsup", "gtm_sup", "full"};
  int compare_seeds = 5;

  std::string checkpoint;  // eval / heatmap input; empty = <out>/checkpoint.gst
  std::string heatmap_image;  // GST1 image file; empty = synthetic validation image
  int heatmap_index = 0;

  double gradcheck_eps = 1e-6;
  double gradcheck_tol_op = 1e-5;
  double gradcheck_tol_e2e = 1e-4;
  int gradcheck_samples = 6;  // elements per parameter tensor in the end-to-end audit; 0 = all
  int gradcheck_batch = 4;
  int gradcheck_width = 4;   // miniature network for the end-to-end audit
  int gradcheck_size = 32;
  std::string gradcheck_fault;  // op whose backward is corrupted for the audit
  double gradcheck_fault_factor = 1.5;

  bool operator==(const RunConfig&) const = default;

  /// Sets one key from its text value. Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Text value of one key, formatted so that set(key, get(key)) is the identity.
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Applies `key = value` lines; `where` prefixes error messages.
  void apply_text(const std::string& text, const std::string& where = "config");
  /// Every key in keys() order.
  std::string echo() const;

  /// Cross-field checks and propagation (input size from data, loss weights).
  void finalize();
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

const char* to_string(Precision p);

/// Named network variant for comparisons: baseline, gfm, gtm_unsup, gtm_sup, full, hrnet.
msnet::NetConfig variant_config(const msnet::NetConfig& base, const std::string& variant);

}  // namespace gsto::cli
