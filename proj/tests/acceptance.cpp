// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria named with --known-shortfall still print FAIL but do not
// change the exit status.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gsto/audit.hpp"
#include "gsto/config.hpp"
#include "gsto/experiment.hpp"
#include "gsto/gated.hpp"
#include "gsto/loss.hpp"
#include "gsto/metrics.hpp"
#include "gsto/msnet.hpp"
#include "gsto/rng.hpp"
#include "gsto/tensor_io.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gsto;
namespace fs = std::filesystem;
using gsto::testing::bit_equal;
using gsto::testing::random_tensor;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, std::string what) {
    if (!ok) {
      if (passed) detail.clear();
      passed = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

template <typename T>
void randomize_store(ParamStore<T>& store, std::uint64_t seed) {
  for (auto& e : store.entries()) {
    if (e.kind == ParamKind::buffer) continue;
    auto r = random_tensor<T>(e.value.shape(), seed, e.name.c_str());
    auto dst = e.value.data_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = r.values()[i] * T(0.5);
  }
}

template <typename T>
msnet::ForwardOptions<T> unit_gates() {
  msnet::ForwardOptions<T> o;
  o.gate_override = T(1);
  return o;
}

template <typename T>
msnet::BranchSet<T> ladder(int n, int width, int side, int count, std::uint64_t seed) {
  msnet::BranchSet<T> b;
  for (int k = 0; k < count; ++k) {
    b.push_back(random_tensor<T>(Shape{n, width << k, side >> k, side >> k}, seed + k, "branch"));
  }
  return b;
}

// ---- criteria

Outcome gradient_audit(const fs::path& out) {
  cli::RunConfig cfg;
  cfg.out = (out / "gradcheck").string();
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  const cli::AuditReport r = cli::run_gradcheck(cfg, log);
  const double secs = seconds_since(t0);
  double op_max = 0, e2e_max = 0;
  std::size_t e2e_checks = 0;
  for (const auto& c : r.checks) {
    if (c.name.rfind("e2e", 0) == 0) {
      e2e_max = std::max(e2e_max, c.max_error);
      ++e2e_checks;
    } else {
      op_max = std::max(op_max, c.max_error);
    }
  }
  Outcome o;
  o.detail = std::to_string(r.checks.size()) + " checks, per-op max " + fmt("%.2e", op_max) +
             ", end-to-end max " + fmt("%.2e", e2e_max) + ", " + fmt("%.1f", secs) + " s";
  for (const auto& f : r.failures()) o.require(false, "failed " + f);
  o.require(e2e_checks > 0, "no end-to-end checks ran");
  o.require(secs < 120.0, "took " + fmt("%.1f", secs) + " s");
  return o;
}

template <typename T>
void recovery_for(Outcome& o, const char* tname) {
  using namespace gsto::gated;
  const std::string tag = std::string(" (") + tname + ")";
  // Single transfers, every direction, both gate forms.
  auto f = random_tensor<T>(Shape{2, 4, 8, 8}, 101, "f");
  for (GateMode mode : {GateMode::unsupervised, GateMode::supervised}) {
    ParamStore<T> store;
    GstoParams<T> p{make_gate_params(store, "site.gate", 4, 3, mode, 102),
                    make_channel_map(store, "site.channel", 4, 6, 102)};
    randomize_store(store, 103);
    for (auto [side, dir] : {std::pair{8, Direction::same}, std::pair{4, Direction::down},
                             std::pair{16, Direction::up}}) {
      ScaleTransferSpec scale{side, side, 6, dir};
      GstoSpec<T> ones{scale, mode, GateMap<T>::constant(2, 8, 8, T(1))};
      o.require(bit_equal(gsto_transfer(f, ones, p).output, st_transfer(f, scale, p.channel)),
                "gsto_transfer" + tag);
    }
  }
  // GFM.
  {
    ParamStore<T> gs, ps;
    auto pg = msnet::make_gfm(gs, "fuse", {4, 8, 16}, GateMode::unsupervised, 104);
    auto pp = msnet::make_gfm(ps, "fuse", {4, 8, 16}, GateMode::none, 104);
    auto in = ladder<T>(2, 4, 8, 3, 105);
    auto a = msnet::gfm(in, pg, unit_gates<T>());
    auto b = msnet::gfm(in, pp);
    for (std::size_t r = 0; r < a.size(); ++r) o.require(bit_equal(a[r], b[r]), "GFM" + tag);
  }
  for (GateMode mode : {GateMode::unsupervised, GateMode::supervised}) {
    ParamStore<T> gs, ps;
    auto in = ladder<T>(2, 4, 16, 3, 106);
    auto tg = msnet::make_gtm(gs, "t", 28, 32, 4, mode, 107);
    auto tp = msnet::make_gtm(ps, "t", 28, 32, 4, GateMode::none, 107);
    o.require(bit_equal(msnet::gtm(in, tg, unit_gates<T>()).branch, msnet::gtm(in, tp).branch),
              "GTM" + tag);

    auto f8 = random_tensor<T>(Shape{2, 8, 12, 12}, 108);
    auto pg = msnet::make_ppm(gs, "ppm", 8, {1, 2, 3, 6}, 8, 4, mode, 109);
    auto pp = msnet::make_ppm(ps, "ppm", 8, {1, 2, 3, 6}, 8, 4, GateMode::none, 109);
    o.require(bit_equal(msnet::gsto_ppm(f8, pg, unit_gates<T>()).output, msnet::gsto_ppm(f8, pp).output),
              "GSTO-PPM" + tag);

    auto ag = msnet::make_aspp(gs, "aspp", 8, {1, 2, 3}, 4, 8, 4, mode, true, 110);
    auto ap = msnet::make_aspp(ps, "aspp", 8, {1, 2, 3}, 4, 8, 4, GateMode::none, true, 110);
    o.require(bit_equal(msnet::gsto_aspp(f8, ag, unit_gates<T>()).output, msnet::gsto_aspp(f8, ap).output),
              "GSTO-ASPP" + tag);
  }
  // Whole network at the default size.
  msnet::NetConfig c;
  msnet::GstoHrnet<T> full(cli::variant_config(c, "full"));
  msnet::GstoHrnet<T> plain(cli::variant_config(c, "baseline"));
  auto image = random_tensor<T>(Shape{2, 3, 64, 64}, 111);
  o.require(bit_equal(full.forward(image, unit_gates<T>()).logits, plain.forward(image).logits),
            "toy network" + tag);
}

Outcome baseline_recovery() {
  Outcome o;
  recovery_for<float>(o, "f32");
  recovery_for<double>(o, "f64");
  if (o.passed) {
    o.detail = "transfer, GFM, GTM, PPM, ASPP and the full network bit-identical in f32 and f64";
  }
  return o;
}

Outcome equation_fidelity() {
  using namespace gsto::gated;
  Outcome o;
  int compared = 0;
  const Shape shapes[] = {{1, 3, 4, 4}, {2, 5, 8, 8}, {2, 8, 8, 8}};
  for (int trial = 0; trial < 3; ++trial) {
    for (const Shape& s : shapes) {
      auto f = random_tensor<double>(s, 200 + trial, "f");
      for (GateMode mode : {GateMode::unsupervised, GateMode::supervised}) {
        ParamStore<double> store;
        GstoParams<double> p{make_gate_params(store, "site.gate", s.c, 4, mode, 201 + trial),
                             make_channel_map(store, "site.channel", s.c, 6, 201 + trial)};
        for (auto& e : store.entries()) {
          auto r = random_tensor<double>(e.value.shape(), 202 + trial, e.name.c_str());
          std::copy(r.values().begin(), r.values().end(), e.value.data_mut().begin());
        }
        Tensor<double> g;
        std::optional<Tensor<double>> prob;
        if (mode == GateMode::unsupervised) {
          g = gsto::testing::unsup_gate_oracle(f, p.gate.rho);
        } else {
          auto [pm, gm] = gsto::testing::sup_gate_oracle(f, p.gate.predictor, p.gate.theta);
          g = gm;
          prob = pm;
        }
        for (int factor : {1, 2, 4}) {
          ScaleTransferSpec scale{s.h / factor, s.w / factor, 6,
                                  factor == 1 ? Direction::same : Direction::down};
          auto r = gsto_transfer(f, GstoSpec<double>{scale, mode}, p);
          const std::string where = to_string(mode) + std::string(" ") + s.str() + " /" +
                                    std::to_string(factor);
          o.require(r.gate && bit_equal(r.gate->values, g), "gate " + where);
          if (prob) o.require(r.probability && bit_equal(r.probability->logits, *prob), "P " + where);
          o.require(bit_equal(r.output, gsto::testing::gated_transfer_oracle(f, g, p.channel.conv, factor)),
                    "output " + where);
          ++compared;
        }
      }
    }
  }
  if (o.passed) o.detail = std::to_string(compared) + " gated transfers bit-identical to scalar oracles";
  return o;
}

Outcome loss_formula() {
  Outcome o;
  auto s = [](double v) { return Tensor<double>::scalar(v); };
  train::LossSpec spec;
  std::array<std::optional<Tensor<double>>, 3> unit{s(1), s(1), s(1)};
  const double two = train::total_loss(s(1), unit, spec).item();
  o.require(two == 2.0, "unit losses give " + fmt("%.17g", two));
  auto rng = SplitMix64::stream(300, "losses");
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    double l[4];
    for (double& v : l) v = 5 * rng.uniform();
    std::array<std::optional<Tensor<double>>, 3> aux{s(l[0]), s(l[1]), s(l[2])};
    const double got = train::total_loss(s(l[3]), aux, spec).item();
    worst = std::max(worst, std::abs(got - (0.2 * l[0] + 0.3 * l[1] + 0.5 * l[2] + 1.0 * l[3])));
  }
  o.require(worst < 1e-12, "max deviation " + fmt("%.2e", worst));
  if (o.passed) o.detail = "unit total 2.0, max deviation " + fmt("%.1e", worst) + " over 1000 draws";
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  LabelMap pred(1, 1, 2), gt(1, 1, 2, 0);
  pred.values = {0, 1};
  const double ex = train::miou(pred, gt, 2, 255).mean;
  o.require(ex == 0.25, "worked example gives " + fmt("%.17g", ex));
  auto rng = SplitMix64::stream(400, "miou");
  int trials = 0;
  while (trials < 10000) {
    const int classes = rng.uniform_int(1, 5);
    const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
    LabelMap p(1, h, w), g(1, h, w);
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.values[i] = rng.uniform() < 0.1 ? 255 : rng.uniform_int(0, classes - 1);
      p.values[i] = rng.uniform_int(0, classes - 1);
      any |= g.values[i] != 255;
    }
    if (!any) continue;
    ++trials;
    // Brute force: a fresh confusion matrix from nested loops over pixels.
    std::vector<std::vector<long>> cm(classes, std::vector<long>(classes, 0));
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.values[i] != 255) ++cm[g.values[i]][p.values[i]];
    }
    double sum = 0;
    int defined = 0;
    std::vector<std::optional<double>> iou(classes);
    for (int c = 0; c < classes; ++c) {
      long tp = cm[c][c], fp = 0, fn = 0;
      for (int k = 0; k < classes; ++k) {
        if (k == c) continue;
        fp += cm[k][c];
        fn += cm[c][k];
      }
      if (tp + fp + fn == 0) continue;
      iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      sum += *iou[c];
      ++defined;
    }
    const auto r = train::miou(p, g, classes, 255);
    const double mean = defined ? sum / defined : 0.0;
    if (r.per_class != iou || r.mean != mean) {
      o.require(false, "instance " + std::to_string(trials) + " disagrees");
      break;
    }
  }
  if (o.passed) o.detail = "worked example 0.25; 10000 random instances agree exactly";
  return o;
}

// Overfit criterion: w=8, 64x64, four classes, 16 fixed images, 400 iterations.
cli::RunConfig overfit_config(const fs::path& out) {
  cli::RunConfig cfg;
  cfg.out = out.string();
  cfg.net.width = 8;
  cfg.data.height = cfg.data.width = 64;
  cfg.data.n_train = 16;
  cfg.data.n_val = 16;
  cfg.optim.max_iter = 400;
  // Best of a sweep over lr, batch, momentum, depth and width at this budget.
  cfg.optim.base_lr = 0.05;
  cfg.optim.weight_decay = 0.0;
  cfg.batch = 2;
  cfg.log_every = 50;
  cfg.log_train_images = 16;
  return cfg;
}

Outcome overfit(const fs::path& out) {
  const cli::RunConfig cfg = overfit_config(out / "overfit");
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  const cli::TrainSummary s = cli::run_train(cfg, log);
  const double secs = seconds_since(t0);
  Outcome o;
  o.detail = "train pixel accuracy " + fmt("%.4f", s.train.pixel_accuracy) + " after " +
             std::to_string(s.iters) + " iterations, " + fmt("%.1f", secs) + " s";
  o.require(s.train.pixel_accuracy >= 0.99, o.detail);
  o.require(secs < 600.0, "took " + fmt("%.1f", secs) + " s");
  return o;
}

// Fixed toy-benchmark budget shared by every variant and seed.
constexpr int kAblationIters = 400;
constexpr int kAblationBatch = 4;
constexpr double kAblationLr = 0.05;

Outcome directional_ablation(const fs::path& out) {
  cli::RunConfig cfg;
  cfg.out = (out / "compare").string();
  cfg.data.n_train = 256;
  cfg.data.n_val = 64;
  cfg.optim.max_iter = kAblationIters;
  cfg.batch = kAblationBatch;
  cfg.optim.base_lr = kAblationLr;
  cfg.log_every = kAblationIters;
  cfg.log_train_images = 0;
  cfg.compare_seeds = 5;
  cfg.compare_variants = {"baseline", "gfm", "gtm_sup", "full"};
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  const cli::CompareReport r = cli::run_compare(cfg, log);
  const auto* base = r.find("baseline");
  const auto* full = r.find("full");
  Outcome o;
  if (!base || !full) {
    o.require(false, "report lacks baseline or full rows");
    return o;
  }
  o.detail = "val mIoU baseline " + fmt("%.4f", base->mean) + " +- " + fmt("%.4f", base->stddev) +
             ", full " + fmt("%.4f", full->mean) + " +- " + fmt("%.4f", full->stddev);
  for (const char* v : {"gfm", "gtm_sup"}) {
    if (const auto* row = r.find(v)) {
      o.detail += std::string(", ") + v + " " + fmt("%.4f", row->mean);
    }
  }
  o.detail += ", " + fmt("%.0f", seconds_since(t0)) + " s";
  o.require(full->miou.size() == 5 && base->miou.size() == 5, "expected 5 seeds per row");
  o.require(full->mean >= base->mean, "full below baseline: " + o.detail);
  o.require(full->inference_params - base->inference_params == full->gate_params,
            "parameter columns differ by other than the gate total");
  o.require(r.text.find("trend baseline <= gfm") != std::string::npos &&
                r.text.find("trend baseline <= gtm_sup") != std::string::npos,
            "report lacks the trend lines");
  return o;
}

Outcome overhead() {
  Outcome o;
  std::string shares;
  for (int w : {8, 16, 32}) {
    msnet::NetConfig c;
    c.width = w;
    msnet::GstoHrnet<float> full(cli::variant_config(c, "full"));
    msnet::GstoHrnet<float> plain(cli::variant_config(c, "baseline"));
    std::size_t formula = 0;
    for (const auto& site : full.gate_sites()) {
      formula += gated::gate_param_count(site.channels, site.classes, site.mode);
    }
    const std::size_t stored = full.params().param_count_if([](const ParamEntry<float>& e) {
      return e.kind == ParamKind::gate || e.name.find(".gate.") != std::string::npos;
    });
    const double share = static_cast<double>(formula) / full.params().total_param_count();
    o.require(formula == full.gate_param_stored() && formula == stored,
              "w=" + std::to_string(w) + " stored gate parameters differ from the formula");
    o.require(full.inference_param_count() - plain.inference_param_count() == formula,
              "w=" + std::to_string(w) + " full - baseline is not the gate total");
    o.require(share < 0.01, "w=" + std::to_string(w) + " share " + fmt("%.4f", share));
    shares += (shares.empty() ? "" : ", ") + std::string("w=") + std::to_string(w) + " " +
              std::to_string(formula) + "/" + std::to_string(full.params().total_param_count()) +
              " = " + fmt("%.3f%%", 100 * share);
  }
  if (o.passed) o.detail = "gate share " + shares;
  return o;
}

Outcome determinism(const fs::path& out) {
  auto run = [&](const std::string& name) {
    cli::RunConfig cfg = overfit_config(out / name);
    cfg.optim.max_iter = 20;
    cfg.log_every = 5;
    std::ostringstream log;
    cli::run_train(cfg, log);
    return std::pair{slurp(out / name / "metrics.log"), slurp(out / name / "checkpoint.gst")};
  };
  const auto a = run("determinism_a");
  const auto b = run("determinism_b");
  Outcome o;
  o.require(!a.first.empty() && !a.second.empty(), "missing artifacts");
  o.require(a.first == b.first, "metrics logs differ");
  o.require(a.second == b.second, "checkpoints differ");
  if (o.passed) {
    o.detail = "metrics logs (" + std::to_string(a.first.size()) + " B) and checkpoints (" +
               std::to_string(a.second.size()) + " B) byte-identical";
  }
  return o;
}

template <typename T>
bool tensor_round_trip() {
  auto t = random_tensor<T>(Shape{2, 3, 5, 7}, 500, "io");
  auto v = t.data_mut();
  v[0] = -T(0);
  v[1] = std::numeric_limits<T>::denorm_min();
  v[2] = std::numeric_limits<T>::max();
  v[3] = std::numeric_limits<T>::lowest();
  v[4] = std::numeric_limits<T>::infinity();
  std::ostringstream a;
  write_tensor(a, t);
  std::istringstream in(a.str());
  auto back = read_tensor<T>(in);
  std::ostringstream b;
  write_tensor(b, back);
  return bit_equal(t, back) && a.str() == b.str();
}

Outcome round_trips(const fs::path& out) {
  Outcome o;
  o.require(tensor_round_trip<float>(), "GST1 f32");
  o.require(tensor_round_trip<double>(), "GST1 f64");

  msnet::GstoHrnet<float> net{msnet::NetConfig{}};
  randomize_store(net.params(), 501);
  std::ostringstream first;
  net.params().save(first);
  msnet::GstoHrnet<float> other{msnet::NetConfig{}};
  std::istringstream in(first.str());
  other.params().load(in);
  std::ostringstream second;
  other.params().save(second);
  o.require(first.str() == second.str(), "checkpoint save/load/save");

  cli::RunConfig cfg;
  cfg.out = (out / "echo").string();
  cfg.set("optim.lr", "0.0123456789012345678");
  cfg.set("loss.weights", "0.1,0.25,0.7,1");
  cfg.set("net.gtm1", "sup");
  cfg.finalize();
  const cli::RunConfig back = cli::parse_config(cfg.echo());
  cli::RunConfig resolved = back;
  resolved.finalize();
  o.require(resolved == cfg && back.echo() == cfg.echo(), "config echo");
  if (o.passed) {
    o.detail = "GST1 f32/f64, checkpoint (" + std::to_string(first.str().size()) +
               " B) and config echo bit-exact";
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = (fs::temp_directory_path() / "gsto_acceptance").string();
  std::vector<std::string> only, known;
  app.add_option("--out", out, "scratch directory for runs");
  app.add_option("--only", only, "run only the named criteria");
  app.add_option("--known-shortfall", known, "criteria whose failure is documented and tolerated");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);
  const fs::path dir(out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient_audit", [&] { return gradient_audit(dir); }},
      {"baseline_recovery", baseline_recovery},
      {"equation_fidelity", equation_fidelity},
      {"loss_formula", loss_formula},
      {"metric_oracle", metric_oracle},
      {"overfit", [&] { return overfit(dir); }},
      {"directional_ablation", [&] { return directional_ablation(dir); }},
      {"overhead", overhead},
      {"determinism", [&] { return determinism(dir); }},
      {"round_trips", [&] { return round_trips(dir); }},
  };

  auto listed = [](const std::vector<std::string>& v, const std::string& n) {
    return std::find(v.begin(), v.end(), n) != v.end();
  };
  for (const auto& k : known) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == k; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", k.c_str());
      return 2;
    }
  }

  int failed = 0, tolerated = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !listed(only, name)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const bool excused = !o.passed && listed(known, name);
    failed += !o.passed && !excused;
    tolerated += excused;
    std::printf("%s %s: %s%s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                excused ? " [known shortfall]" : "");
    std::fflush(stdout);
  }
  if (tolerated > 0) std::printf("# %d known shortfall(s) tolerated\n", tolerated);
  return failed == 0 ? 0 : 1;
}
