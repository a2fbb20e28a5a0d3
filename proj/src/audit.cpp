#include "gsto/audit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>

#include "gsto/gated.hpp"
#include "gsto/gradcheck.hpp"
#include "gsto/loss.hpp"
#include "gsto/msnet.hpp"
#include "gsto/ops.hpp"
#include "gsto/rng.hpp"
#include "gsto/synth.hpp"

namespace gsto::cli {

namespace {

using D = double;
using Inputs = std::vector<std::pair<std::string, Tensor<D>>>;
using LossFn = std::function<Tensor<D>()>;

Tensor<D> random(SplitMix64& rng, Shape s, double scale = 1.0, double min_abs = 0.0) {
  std::vector<D> v(s.numel());
  for (D& x : v) {
    do {
      x = scale * rng.normal();
    } while (std::abs(x) < min_abs);
  }
  return Tensor<D>::from(s, std::move(v), true);
}

Tensor<D> projection(SplitMix64& rng, Shape s) {
  std::vector<D> v(s.numel());
  for (D& x : v) x = rng.normal();
  return Tensor<D>::from(s, std::move(v));
}

std::vector<std::vector<D>> analytic_grads(Inputs& inputs, const LossFn& loss) {
  for (auto& [n, t] : inputs) t.zero_grad();
  Tape<D> tape;
  Tensor<D> l;
  {
    TapeScope<D> scope(tape);
    l = loss();
  }
  tape.backward(l);
  std::vector<std::vector<D>> out;
  for (auto& [n, t] : inputs) {
    out.push_back(t.grad());
    t.zero_grad();
  }
  return out;
}

double rel_error(double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); }

/// Folds the finite-difference comparison of one input into `out`. Elements
/// that disagree with the single-step difference get a Ridders estimate as the
/// reference instead.
void compare_input(AuditCheck& out, const std::string& input, Tensor<D>& x,
                   const std::vector<D>& analytic, const LossFn& loss,
                   const std::vector<std::size_t>& idx, double eps) {
  const std::function<D(const Tensor<D>&)> f = [&](const Tensor<D>&) { return loss().item(); };
  Tensor<D> numeric =
      idx.empty() ? finite_diff_grad<D>(f, x, eps) : finite_diff_grad_at<D>(f, x, idx, eps);
  auto nv = numeric.data_mut();
  // Once a refined element still disagrees the check has failed; stop refining.
  bool settled = false;
  auto refine = [&](std::size_t i) {
    if (settled || rel_error(analytic[i], nv[i]) < out.tol) return;
    nv[i] = finite_diff_ridders<D>(f, x, i).value;
    ++out.refined;
    settled = rel_error(analytic[i], nv[i]) >= out.tol;
  };
  if (idx.empty()) {
    for (std::size_t i = 0; i < nv.size(); ++i) refine(i);
  } else {
    for (std::size_t i : idx) refine(i);
  }
  const GradReport r = grad_check(analytic, numeric.values(), out.tol, idx);
  out.checked += r.checked;
  if (r.max_error >= out.max_error && !r.worst.empty()) {
    const GradMismatch& w = r.worst.front();
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s[%zu] analytic %.6e numeric %.6e", input.c_str(), w.index,
                  w.analytic, w.numeric);
    out.worst = buf;
    out.max_error = r.max_error;
  }
  out.passed = out.max_error < out.tol;
}

AuditCheck check(const std::string& name, Inputs inputs, const LossFn& loss, double eps, double tol) {
  const auto analytic = analytic_grads(inputs, loss);
  AuditCheck out{name, 0.0, tol, 0, 0, true, ""};
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    compare_input(out, inputs[i].first, inputs[i].second, analytic[i], loss, {}, eps);
  }
  return out;
}

Inputs store_inputs(ParamStore<D>& store) {
  Inputs in;
  for (auto& e : store.entries()) {
    if (e.trainable()) in.emplace_back(e.name, e.value);
  }
  return in;
}

std::string line(const AuditCheck& c) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%-24s %s max_rel_err %.3e tol %.0e checked %zu refined %zu%s%s",
                c.name.c_str(), c.passed ? "PASS" : "FAIL", c.max_error, c.tol, c.checked,
                c.refined, c.worst.empty() ? "" : "  worst ", c.worst.c_str());
  return buf;
}

}  // namespace

bool AuditReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const AuditCheck& c) { return c.passed; });
}

std::vector<std::string> AuditReport::failures() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (!c.passed) out.push_back(c.name);
  }
  return out;
}

std::string AuditReport::text() const {
  std::string t;
  for (const auto& c : checks) t += line(c) + '\n';
  return t;
}

AuditReport per_op_audit(double eps, double tol, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SplitMix64 rng = SplitMix64::stream(seed, "gradcheck.ops");
  AuditReport report;
  auto run = [&](const std::string& name, Inputs in, const LossFn& f) {
    report.checks.push_back(check(name, std::move(in), f, eps, tol));
  };

  {
    auto x = random(rng, {2, 3, 6, 6});
    auto w = random(rng, {4, 3, 3, 3}, 0.5);
    auto b = random(rng, {1, 4, 1, 1});
    auto r = projection(rng, {2, 4, 3, 3});
    nn::Conv2dParams<D> p{w, b, 2, 1, 1};
    run("conv2d", {{"x", x}, {"weight", w}, {"bias", b}},
        [=] { return nn::weighted_sum(nn::conv2d(x, p), r); });
  }
  {
    auto x = random(rng, {1, 2, 7, 7});
    auto w = random(rng, {3, 2, 3, 3}, 0.5);
    auto r = projection(rng, {1, 3, 7, 7});
    nn::Conv2dParams<D> p{w, Tensor<D>(), 1, 2, 2};
    run("conv2d_dilated", {{"x", x}, {"weight", w}},
        [=] { return nn::weighted_sum(nn::conv2d(x, p), r); });
  }
  for (const nn::NormMode mode : {nn::NormMode::train, nn::NormMode::eval}) {
    auto x = random(rng, {3, 2, 3, 3});
    auto gamma = random(rng, {1, 2, 1, 1});
    auto beta = random(rng, {1, 2, 1, 1});
    auto r = projection(rng, {3, 2, 3, 3});
    nn::NormParams<D> p{gamma, beta, Tensor<D>::full({1, 2, 1, 1}, 0.3),
                        Tensor<D>::full({1, 2, 1, 1}, 1.7), 0.1, 1e-5, mode};
    run(mode == nn::NormMode::train ? "batch_norm_train" : "batch_norm_eval",
        {{"x", x}, {"gamma", gamma}, {"beta", beta}}, [=]() mutable {
          return nn::weighted_sum(nn::batch_norm(x, p), r);
        });
  }
  {
    auto x = random(rng, {2, 3, 4, 4}, 1.0, 0.05);
    auto r = projection(rng, x.shape());
    run("relu", {{"x", x}}, [=] { return nn::weighted_sum(nn::relu(x), r); });
  }
  {
    auto x = random(rng, {2, 3, 4, 4}, 3.0);
    auto r = projection(rng, x.shape());
    run("sigmoid", {{"x", x}}, [=] { return nn::weighted_sum(nn::sigmoid(x), r); });
  }
  {
    auto x = random(rng, {2, 2, 3, 4});
    auto r = projection(rng, {2, 2, 7, 9});
    run("bilinear_upsample", {{"x", x}},
        [=] { return nn::weighted_sum(nn::bilinear_upsample(x, 7, 9), r); });
  }
  {
    auto x = random(rng, {2, 2, 8, 8});
    auto r = projection(rng, {2, 2, 2, 2});
    run("avg_pool_down", {{"x", x}}, [=] { return nn::weighted_sum(nn::avg_pool_down(x, 4), r); });
  }
  {
    auto x = random(rng, {1, 2, 7, 5});
    auto r = projection(rng, {1, 2, 3, 2});
    run("adaptive_avg_pool", {{"x", x}},
        [=] { return nn::weighted_sum(nn::adaptive_avg_pool(x, 3, 2), r); });
  }
  {
    auto a = random(rng, {2, 2, 3, 3});
    auto b = random(rng, {2, 3, 3, 3});
    auto r = projection(rng, {2, 5, 3, 3});
    run("concat_channels", {{"a", a}, {"b", b}},
        [=] { return nn::weighted_sum(nn::concat_channels(std::vector<Tensor<D>>{a, b}), r); });
  }
  {
    auto a = random(rng, {2, 2, 3, 3});
    auto b = random(rng, {2, 2, 3, 3});
    auto c = random(rng, {2, 2, 3, 3});
    auto r = projection(rng, a.shape());
    run("add", {{"a", a}, {"b", b}}, [=] { return nn::weighted_sum(nn::add(a, b), r); });
    run("add_n", {{"a", a}, {"b", b}, {"c", c}},
        [=] { return nn::weighted_sum(nn::add_n(std::vector<Tensor<D>>{a, b, c}), r); });
    run("mul", {{"a", a}, {"b", b}}, [=] { return nn::weighted_sum(nn::mul(a, b), r); });
    run("scale", {{"a", a}}, [=] { return nn::weighted_sum(nn::scale(a, 0.7), r); });
    run("sum", {{"a", a}}, [=] { return nn::sum(nn::mul(a, a)); });
    run("weighted_sum", {{"a", a}}, [=] { return nn::weighted_sum(a, r); });
  }
  {
    auto x = random(rng, {2, 3, 4, 4});
    auto g = random(rng, {2, 1, 4, 4});
    auto r = projection(rng, x.shape());
    run("mul_spatial", {{"x", x}, {"g", g}}, [=] { return nn::weighted_sum(nn::mul_spatial(x, g), r); });
  }
  {
    auto x = random(rng, {2, 5, 3, 4}, 2.0);
    LabelMap y(2, 3, 4);
    for (auto& v : y.values) v = rng.uniform() < 0.15 ? 255 : rng.uniform_int(0, 4);
    run("pixel_cross_entropy", {{"logits", x}}, [=] { return train::pixel_cross_entropy(x, y, 255); });
  }

  // Both gate forms through a full gated transfer, then the pyramid heads.
  for (const auto mode : {gated::GateMode::unsupervised, gated::GateMode::supervised}) {
    ParamStore<D> store;
    const int classes = 3;
    gated::GstoParams<D> p;
    p.gate = gated::make_gate_params(store, "t.gate", 4, classes, mode, seed);
    p.channel = gated::make_channel_map(store, "t.channel", 4, 6, seed, true, true);
    auto x = random(rng, {3, 4, 4, 4});
    const bool up = mode == gated::GateMode::unsupervised;
    gated::GstoSpec<D> spec;
    spec.scale = {up ? 8 : 2, up ? 8 : 2, 6, up ? gated::Direction::up : gated::Direction::down};
    spec.gate_mode = mode;
    auto r = projection(rng, {3, 6, spec.scale.out_h, spec.scale.out_w});
    LabelMap y(3, 4, 4);
    for (auto& v : y.values) v = rng.uniform_int(0, classes - 1);
    Inputs in = store_inputs(store);
    in.emplace_back("f", x);
    report.checks.push_back(check(
        up ? "gsto_unsupervised" : "gsto_supervised", in,
        [=]() mutable {
          auto res = gated::gsto_transfer(x, spec, p);
          Tensor<D> l = nn::weighted_sum(res.output, r);
          if (res.probability) l = nn::add(l, train::pixel_cross_entropy(res.probability->logits, y, 255));
          return l;
        },
        eps, tol));
  }
  for (const auto mode : {gated::GateMode::unsupervised, gated::GateMode::supervised}) {
    const std::string tag = mode == gated::GateMode::unsupervised ? "unsupervised" : "supervised";
    const int classes = 3;
    auto x = random(rng, {3, 4, 6, 6});
    LabelMap y(3, 6, 6);
    for (auto& v : y.values) v = rng.uniform_int(0, classes - 1);
    {
      ParamStore<D> store;
      auto p = msnet::make_ppm(store, "ppm", 4, {1, 2, 3}, 4, classes, mode, seed);
      auto r = projection(rng, {3, 4, 6, 6});
      Inputs in = store_inputs(store);
      in.emplace_back("f", x);
      report.checks.push_back(check(
          "gsto_ppm_" + tag, in,
          [=]() mutable {
            auto res = msnet::gsto_ppm(x, p);
            Tensor<D> l = nn::weighted_sum(res.output, r);
            if (res.probability) l = nn::add(l, train::pixel_cross_entropy(res.probability->logits, y, 255));
            return l;
          },
          eps, tol));
    }
    {
      ParamStore<D> store;
      auto p = msnet::make_aspp(store, "aspp", 4, {1, 2}, 3, 4, classes, mode, true, seed);
      auto r = projection(rng, {3, 4, 6, 6});
      Inputs in = store_inputs(store);
      in.emplace_back("f", x);
      report.checks.push_back(check(
          "gsto_aspp_" + tag, in,
          [=]() mutable {
            auto res = msnet::gsto_aspp(x, p);
            Tensor<D> l = nn::weighted_sum(res.output, r);
            if (res.probability) l = nn::add(l, train::pixel_cross_entropy(res.probability->logits, y, 255));
            return l;
          },
          eps, tol));
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

AuditReport end_to_end_audit(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  msnet::NetConfig nc = cfg.net;
  nc.width = cfg.gradcheck_width;
  nc.input_h = cfg.gradcheck_size;
  nc.input_w = cfg.gradcheck_size;
  nc.seed = cfg.seed;
  msnet::GstoHrnet<D> net(nc);

  train::SynthSpec data = cfg.data;
  data.height = cfg.gradcheck_size;
  data.width = cfg.gradcheck_size;
  std::vector<train::Sample<D>> samples;
  for (int i = 0; i < cfg.gradcheck_batch; ++i) samples.push_back(train::synth_generate<D>(data, i));
  const auto batch = train::make_batch(samples);

  const int per_tensor = cfg.gradcheck_samples;
  auto sample = [&](std::size_t input, std::size_t numel) {
    std::vector<std::size_t> idx;
    if (per_tensor == 0 || numel <= static_cast<std::size_t>(per_tensor)) return idx;
    SplitMix64 rng = SplitMix64::stream(cfg.seed, "gradcheck.sample", input);
    while (idx.size() < static_cast<std::size_t>(per_tensor)) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(numel) - 1));
      if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
  };

  const train::LossSpec loss = cfg.loss;
  const LossFn f = [&] { return train::network_loss(net.forward(batch.image), batch.labels, loss).total; };

  AuditReport report;
  Inputs params = store_inputs(net.params());
  const auto analytic = analytic_grads(params, f);
  // One check per parameter tensor so a failure names its owner.
  for (std::size_t i = 0; i < params.size(); ++i) {
    AuditCheck c{"e2e:" + params[i].first, 0.0, cfg.gradcheck_tol_e2e, 0, 0, true, ""};
    compare_input(c, params[i].first, params[i].second, analytic[i], f,
                  sample(i, params[i].second.numel()), cfg.gradcheck_eps);
    report.checks.push_back(std::move(c));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

AuditReport run_gradcheck(RunConfig cfg, std::ostream& console) {
  cfg.precision = Precision::f64;
  cfg.finalize();
  const auto t0 = std::chrono::steady_clock::now();
  struct FaultGuard {
    explicit FaultGuard(const std::string& name, double factor) {
      if (!name.empty()) set_backward_fault(name, factor);
    }
    ~FaultGuard() { set_backward_fault(""); }
  } guard(cfg.gradcheck_fault, cfg.gradcheck_fault_factor);
  if (!cfg.gradcheck_fault.empty()) {
    console << "fault injected into backward of '" << cfg.gradcheck_fault << "'\n";
  }

  AuditReport report = per_op_audit(cfg.gradcheck_eps, cfg.gradcheck_tol_op, cfg.seed);
  AuditReport e2e = end_to_end_audit(cfg);
  report.checks.insert(report.checks.end(), e2e.checks.begin(), e2e.checks.end());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string text = report.text();
  const auto failed = report.failures();
  text += failed.empty() ? "all " + std::to_string(report.checks.size()) + " checks passed\n"
                         : std::to_string(failed.size()) + " of " +
                               std::to_string(report.checks.size()) + " checks failed\n";
  std::filesystem::create_directories(cfg.out);
  std::ofstream(std::filesystem::path(cfg.out) / "gradcheck.txt", std::ios::binary) << text;
  console << text;
  char buf[64];
  std::snprintf(buf, sizeof buf, "elapsed %.1f s\n", report.seconds);
  console << buf;
  return report;
}

}  // namespace gsto::cli
