#include "gsto/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gsto/heatmap.hpp"
#include "gsto/metrics.hpp"
#include "gsto/ops.hpp"
#include "gsto/rng.hpp"
#include "gsto/tensor_io.hpp"

namespace fs = std::filesystem;

namespace gsto::cli {

namespace {

std::string format(const char* f, double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
}

template <typename T>
struct Dataset {
  std::vector<train::Sample<T>> train;
  std::vector<train::Sample<T>> val;
};

template <typename T>
Dataset<T> build_dataset(const train::SynthSpec& spec) {
  Dataset<T> d;
  for (int i = 0; i < spec.n_train; ++i) d.train.push_back(train::synth_generate<T>(spec, i));
  for (int i = 0; i < spec.n_val; ++i) {
    d.val.push_back(train::synth_generate<T>(spec, spec.n_train + i));
  }
  return d;
}

template <typename T>
EvalMetrics evaluate(msnet::GstoHrnet<T>& net, const std::vector<train::Sample<T>>& samples,
                     std::size_t limit, int batch, const train::LossSpec& loss) {
  train::ConfusionMatrix cm(net.config().classes, loss.ignore_index);
  const std::size_t n = std::min(limit, samples.size());
  msnet::ForwardOptions<T> opts;
  opts.norm = nn::NormMode::eval;
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    std::vector<train::Sample<T>> chunk(samples.begin() + b, samples.begin() + e);
    const auto s = train::make_batch(chunk);
    const auto out = net.forward(s.image, opts);
    cm.add(nn::argmax_channels(out.logits), s.labels.values);
  }
  return {cm.pixel_accuracy(), cm.miou(), cm.iou()};
}

template <typename T>
std::vector<std::string> write_heatmaps(msnet::GstoHrnet<T>& net, const Tensor<T>& image,
                                        const fs::path& dir, std::ostream& console) {
  fs::create_directories(dir);
  msnet::ForwardTrace<T> trace;
  msnet::ForwardOptions<T> opts;
  opts.norm = nn::NormMode::eval;
  opts.trace = &trace;
  net.forward(image, opts);
  std::vector<std::string> names;
  auto emit = [&](const std::string& name, const Tensor<T>& t, MapKind kind) {
    const Heatmap map = to_heatmap(t, kind);
    if (map.constant) console << "warning: " << name << " is constant\n";
    const std::string file = name + ".pgm";
    write_pgm((dir / file).string(), map);
    names.push_back(file);
  };
  for (const auto& [name, t] : trace.features) emit(name, t, MapKind::feature);
  for (const auto& [name, g] : trace.gates) emit(name, g.values, MapKind::gate);
  return names;
}

template <typename T>
Tensor<T> heatmap_image(const RunConfig& cfg) {
  if (!cfg.heatmap_image.empty()) {
    std::ifstream is(cfg.heatmap_image, std::ios::binary);
    if (!is) throw FormatError("cannot open image '" + cfg.heatmap_image + "'");
    Tensor<T> t = read_tensor_any<T>(is);
    if (t.shape().n != 1) throw ShapeError("heatmap image must hold a single image, got " + t.shape().str());
    return t;
  }
  if (cfg.heatmap_index < 0 || cfg.heatmap_index >= std::max(cfg.data.n_val, 1)) {
    throw ConfigError("heatmap.index outside the validation split");
  }
  const std::uint64_t idx =
      cfg.data.n_val > 0 ? static_cast<std::uint64_t>(cfg.data.n_train + cfg.heatmap_index) : 0;
  return train::synth_generate<T>(cfg.data, idx).image;
}

std::string checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? (fs::path(cfg.out) / "checkpoint.gst").string() : cfg.checkpoint;
}

template <typename T>
TrainSummary train_impl(const RunConfig& cfg, std::ostream& console, bool write_extras) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_text(out / "config.txt", cfg.echo());

  const Dataset<T> data = build_dataset<T>(cfg.data);
  msnet::GstoHrnet<T> net(cfg.net);
  auto& store = net.params();
  train::OptimState state = cfg.optim;

  std::ofstream log(out / "metrics.log", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write metrics log under '" + cfg.out + "'");
  log << metrics_header() << '\n';

  const int n_train = static_cast<int>(data.train.size());
  const int batch = std::min(cfg.batch, n_train);
  std::vector<int> order;
  std::size_t cursor = 0;
  int epoch = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      order.resize(n_train);
      std::iota(order.begin(), order.end(), 0);
      SplitMix64 rng = SplitMix64::stream(cfg.seed, "train.order", epoch++);
      for (int i = n_train - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  TrainSummary summary;
  for (int it = 0; it < state.max_iter; ++it) {
    state.current_iter = it;
    const double lr = train::poly_lr(state);

    std::vector<int> idx(batch);
    for (int& i : idx) i = next_index();
    std::sort(idx.begin(), idx.end());
    SplitMix64 flip_rng = SplitMix64::stream(cfg.seed, "train.flip", it);
    std::vector<train::Sample<T>> chunk;
    std::vector<bool> flip;
    for (int i : idx) {
      chunk.push_back(data.train[i]);
      flip.push_back(cfg.flip && flip_rng.uniform() < 0.5);
    }
    const auto b = train::make_batch(chunk, flip);

    Tape<T> tape;
    train::NetworkLoss<T> loss;
    {
      TapeScope<T> scope(tape);
      const auto out_t = net.forward(b.image);
      loss = train::network_loss(out_t, b.labels, cfg.loss);
    }
    const double total = static_cast<double>(loss.total.item());
    if (!std::isfinite(total)) {
      throw NumericError("non-finite loss " + format("%g", total) + " at iteration " +
                         std::to_string(it + 1));
    }
    tape.backward(loss.total);
    train::sgd_step(store, state);
    summary.final_loss = total;

    if ((it + 1) % cfg.log_every == 0 || it + 1 == state.max_iter) {
      std::optional<EvalMetrics> tr;
      if (cfg.log_train_images > 0) tr = evaluate(net, data.train, cfg.log_train_images, cfg.batch, cfg.loss);
      std::optional<EvalMetrics> va;
      if (!data.val.empty()) va = evaluate(net, data.val, data.val.size(), cfg.batch, cfg.loss);
      std::string row = std::to_string(it + 1) + ' ' + format("%.9g", lr) + ' ' + format("%.9g", total);
      for (const auto& l : loss.stages) row += ' ' + format("%.9g", l ? *l : NAN);
      row += ' ' + format("%.6f", tr ? tr->pixel_accuracy : NAN);
      row += ' ' + format("%.6f", va ? va->pixel_accuracy : NAN);
      row += ' ' + format("%.6f", va ? va->miou : NAN);
      log << row << '\n' << std::flush;
      console << row << '\n';
    }
  }
  log.close();

  store.save((out / "checkpoint.gst").string());
  summary.iters = state.max_iter;
  summary.train = evaluate(net, data.train, data.train.size(), cfg.batch, cfg.loss);
  if (!data.val.empty()) summary.val = evaluate(net, data.val, data.val.size(), cfg.batch, cfg.loss);
  summary.params = store.total_param_count();
  summary.inference_params = net.inference_param_count();
  summary.gate_params = net.gate_param_stored();
  if (write_extras) {
    const Tensor<T> img = data.val.empty() ? data.train.front().image
                                           : data.val[std::min<std::size_t>(cfg.heatmap_index, data.val.size() - 1)].image;
    write_heatmaps(net, img, out / "heatmaps", console);
  }
  summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

template <typename T>
EvalMetrics eval_impl(const RunConfig& cfg, std::ostream& console) {
  msnet::GstoHrnet<T> net(cfg.net);
  net.params().load(checkpoint_path(cfg));
  std::vector<train::Sample<T>> val;
  for (int i = 0; i < cfg.data.n_val; ++i) {
    val.push_back(train::synth_generate<T>(cfg.data, cfg.data.n_train + i));
  }
  if (val.empty()) throw ConfigError("eval needs data.n_val > 0");
  const EvalMetrics m = evaluate(net, val, val.size(), cfg.batch, cfg.loss);
  std::string text = "pixel_accuracy " + format("%.6f", m.pixel_accuracy) + "\n" + "miou " +
                     format("%.6f", m.miou) + "\n";
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    text += "iou" + std::to_string(c) + ' ' + format("%.6f", m.iou[c] ? *m.iou[c] : NAN) + '\n';
  }
  fs::create_directories(cfg.out);
  write_text(fs::path(cfg.out) / "eval.txt", text);
  console << text;
  return m;
}

template <typename T>
std::vector<std::string> heatmap_impl(const RunConfig& cfg, std::ostream& console) {
  msnet::GstoHrnet<T> net(cfg.net);
  net.params().load(checkpoint_path(cfg));
  const Tensor<T> img = heatmap_image<T>(cfg);
  return write_heatmaps(net, img, fs::path(cfg.out) / "heatmaps", console);
}

template <typename T>
int gen_data_impl(const RunConfig& cfg, std::ostream& console) {
  const fs::path dir = fs::path(cfg.out) / "data";
  fs::create_directories(dir);
  const int total = cfg.data.n_train + cfg.data.n_val;
  for (int i = 0; i < total; ++i) {
    const auto s = train::synth_generate<T>(cfg.data, i);
    char stem[64];
    const bool is_train = i < cfg.data.n_train;
    std::snprintf(stem, sizeof stem, "%s_%04d", is_train ? "train" : "val",
                  is_train ? i : i - cfg.data.n_train);
    save_tensor((dir / (std::string(stem) + ".image.gst")).string(), s.image);
    Tensor<T> labels = Tensor<T>::zeros(Shape{1, 1, s.labels.h, s.labels.w});
    auto lv = labels.data_mut();
    for (std::size_t p = 0; p < s.labels.size(); ++p) lv[p] = static_cast<T>(s.labels.values[p]);
    save_tensor((dir / (std::string(stem) + ".labels.gst")).string(), labels);
  }
  console << "wrote " << total << " pairs to " << dir.string() << '\n';
  return total;
}

template <typename R>
R dispatch(const RunConfig& cfg, auto&& f32, auto&& f64) {
  return cfg.precision == Precision::f32 ? f32() : f64();
}

}  // namespace

const std::string& metrics_header() {
  static const std::string h =
      "# iter lr loss loss1 loss2 loss3 loss4 train_pixacc val_pixacc val_miou";
  return h;
}

TrainSummary run_train(RunConfig cfg, std::ostream& console) {
  cfg.finalize();
  return dispatch<TrainSummary>(
      cfg, [&] { return train_impl<float>(cfg, console, true); },
      [&] { return train_impl<double>(cfg, console, true); });
}

EvalMetrics run_eval(RunConfig cfg, std::ostream& console) {
  cfg.finalize();
  return dispatch<EvalMetrics>(
      cfg, [&] { return eval_impl<float>(cfg, console); },
      [&] { return eval_impl<double>(cfg, console); });
}

std::vector<std::string> run_heatmap(RunConfig cfg, std::ostream& console) {
  cfg.finalize();
  return dispatch<std::vector<std::string>>(
      cfg, [&] { return heatmap_impl<float>(cfg, console); },
      [&] { return heatmap_impl<double>(cfg, console); });
}

int run_gen_data(RunConfig cfg, std::ostream& console) {
  cfg.finalize();
  return dispatch<int>(
      cfg, [&] { return gen_data_impl<float>(cfg, console); },
      [&] { return gen_data_impl<double>(cfg, console); });
}

const VariantRow* CompareReport::find(const std::string& variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return &r;
  }
  return nullptr;
}

CompareReport run_compare(RunConfig cfg, std::ostream& console) {
  cfg.finalize();
  if (cfg.data.n_val < 1) throw ConfigError("compare needs data.n_val > 0");
  CompareReport report;
  for (const auto& variant : cfg.compare_variants) {
    VariantRow row;
    row.variant = variant;
    for (int k = 0; k < cfg.compare_seeds; ++k) {
      RunConfig run = cfg;
      run.seed = cfg.seed + static_cast<std::uint64_t>(k);
      run.net = variant_config(cfg.net, variant);
      run.out = (fs::path(cfg.out) / variant / ("seed" + std::to_string(run.seed))).string();
      run.finalize();
      std::ostringstream quiet;
      const TrainSummary s = cfg.precision == Precision::f32 ? train_impl<float>(run, quiet, false)
                                                             : train_impl<double>(run, quiet, false);
      row.inference_params = s.inference_params;
      row.gate_params = s.gate_params;
      row.miou.push_back(s.val->miou);
      console << variant << " seed " << run.seed << " val_miou " << format("%.6f", s.val->miou)
              << " (" << format("%.1f", s.seconds) << " s)\n";
    }
    const double n = static_cast<double>(row.miou.size());
    row.mean = std::accumulate(row.miou.begin(), row.miou.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : row.miou) ss += (v - row.mean) * (v - row.mean);
    row.stddev = row.miou.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    report.rows.push_back(std::move(row));
  }

  std::string& t = report.text;
  t = "# variant inference_params gate_params val_miou_mean val_miou_std runs\n";
  for (const auto& r : report.rows) {
    t += r.variant + ' ' + std::to_string(r.inference_params) + ' ' + std::to_string(r.gate_params) +
         ' ' + format("%.6f", r.mean) + ' ' + format("%.6f", r.stddev) + ' ' +
         std::to_string(r.miou.size()) + '\n';
  }
  if (const VariantRow* base = report.find("baseline")) {
    for (const char* v : {"gfm", "gtm_sup", "full"}) {
      const VariantRow* r = report.find(v);
      if (r == nullptr) continue;
      const bool holds = r->mean >= base->mean;
      t += std::string("trend baseline <= ") + v + ": " +
           (holds ? "holds" : "toy-scale exception") + " (" + format("%+.6f", r->mean - base->mean) +
           ")\n";
    }
  }
  fs::create_directories(cfg.out);
  write_text(fs::path(cfg.out) / "compare.txt", t);
  console << t;
  return report;
}

}  // namespace gsto::cli
