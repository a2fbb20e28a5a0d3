#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsto/config.hpp"

namespace gsto::cli {

struct EvalMetrics {
  double pixel_accuracy = 0.0;
  double miou = 0.0;
  std::vector<std::optional<double>> iou;
};

struct TrainSummary {
  int iters = 0;
  double final_loss = 0.0;
  EvalMetrics train;                // eval-mode, all training images
  std::optional<EvalMetrics> val;   // absent when data.n_val = 0
  std::size_t params = 0;           // learnable, including training-only heads
  std::size_t inference_params = 0;
  std::size_t gate_params = 0;
  double seconds = 0.0;
};

/// Column header of metrics.log.
const std::string& metrics_header();

/// Trains per config and writes config.txt, metrics.log, checkpoint.gst and
/// heatmaps/ under cfg.out. Log rows are echoed to `console`.
TrainSummary run_train(RunConfig cfg, std::ostream& console);

/// Loads the checkpoint and scores the validation split; writes eval.txt.
EvalMetrics run_eval(RunConfig cfg, std::ostream& console);

struct VariantRow {
  std::string variant;
  std::size_t inference_params = 0;
  std::size_t gate_params = 0;
  std::vector<double> miou;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;
};

struct CompareReport {
  std::vector<VariantRow> rows;
  std::string text;

  const VariantRow* find(const std::string& variant) const;
};

/// Trains every variant once per seed (seed, seed+1, ...) on the same data and
/// writes compare.txt; individual runs go to <out>/<variant>/seed<k>.
CompareReport run_compare(RunConfig cfg, std::ostream& console);

/// Writes PGM heatmaps of every branch feature and gate map to <out>/heatmaps.
/// Returns the written file names.
std::vector<std::string> run_heatmap(RunConfig cfg, std::ostream& console);

/// Dumps train and validation pairs as GST1 files under <out>/data.
int run_gen_data(RunConfig cfg, std::ostream& console);

}  // namespace gsto::cli
