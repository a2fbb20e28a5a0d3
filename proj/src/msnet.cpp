#include "gsto/msnet.hpp"

#include <stdexcept>

namespace gsto::msnet {

using gated::GateMap;
using gated::GstoParams;
using gated::GstoSpec;
using gated::ProbabilityMap;

const char* to_string(Transition t) {
  return t == Transition::gtm ? "gtm" : "stride_conv";
}

Transition parse_transition(const std::string& s) {
  if (s == "gtm") return Transition::gtm;
  if (s == "stride_conv") return Transition::stride_conv;
  throw std::invalid_argument("unknown transition '" + s + "'");
}

void NetConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("NetConfig: " + why); };
  if (stages != 4) fail("stages must be 4");
  if (width < 1) fail("width must be positive");
  if (blocks < 1) fail("blocks must be positive");
  if (classes < 2) fail("classes must be at least 2");
  if (loss_weights.size() != static_cast<std::size_t>(stages)) fail("one loss weight per stage");
  for (double w : loss_weights) {
    if (!(w >= 0.0)) fail("loss weights must be non-negative");
  }
  if (gfm_mode == GateMode::supervised) fail("fusion gates are unsupervised or none");
  if (transition == Transition::stride_conv) {
    for (GateMode m : gtm_modes) {
      if (m != GateMode::none) fail("stride_conv transitions carry no gates");
    }
  }
  const int div = geometry_divisor();
  if (input_h < div || input_w < div || input_h % div != 0 || input_w % div != 0) {
    fail("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
         " must be a positive multiple of " + std::to_string(div));
  }
}

bool NetConfig::any_supervised() const {
  for (GateMode m : gtm_modes) {
    if (m == GateMode::supervised) return true;
  }
  return false;
}

bool NetConfig::has_stage1_aux_head() const {
  return stage1_aux_head && any_supervised() && gtm_modes[0] != GateMode::supervised;
}

template <typename T>
void validate_branches(const BranchSet<T>& branches) {
  if (branches.empty()) throw ShapeError("empty branch set");
  const Shape& b0 = branches.front().shape();
  for (std::size_t k = 1; k < branches.size(); ++k) {
    const Shape& prev = branches[k - 1].shape();
    const Shape& cur = branches[k].shape();
    if (cur.n != b0.n || cur.h * 2 != prev.h || cur.w * 2 != prev.w || cur.c != prev.c * 2) {
      throw ShapeError("malformed branch set: branch " + std::to_string(k) + " " + cur.str() +
                       " after " + prev.str());
    }
  }
}

namespace {

template <typename T>
std::optional<GateMap<T>> override_for(const Shape& s, const ForwardOptions<T>& opts) {
  if (!opts.gate_override) return std::nullopt;
  return GateMap<T>::constant(s.n, s.h, s.w, *opts.gate_override);
}

template <typename T>
void trace_gate(const ForwardOptions<T>& opts, const std::string& name,
                const std::optional<GateMap<T>>& gate) {
  if (opts.trace != nullptr && gate) opts.trace->gates.emplace_back(name, *gate);
}

}  // namespace

// ---------------------------------------------------------------------------
// GFM

template <typename T>
GfmParams<T> make_gfm(ParamStore<T>& store, const std::string& name, const std::vector<int>& widths,
                      GateMode mode, std::uint64_t seed, const nn::NormConfig& norm) {
  GfmParams<T> p;
  p.mode = mode;
  p.widths = widths;
  const std::size_t n = widths.size();
  p.edges.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    p.edges[s].resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (s == r) continue;
      const std::string edge = name + "." + std::to_string(s) + "to" + std::to_string(r);
      GstoParams<T>& e = p.edges[s][r];
      e.gate = gated::make_gate_params(store, edge + ".gate", widths[s], 0, mode, seed);
      e.channel = nn::make_cbr(store, edge + ".channel",
                               nn::ConvSpec{.in = widths[s], .out = widths[r]}, seed, true, true,
                               static_cast<T>(norm.momentum), static_cast<T>(norm.eps));
    }
  }
  return p;
}

template <typename T>
BranchSet<T> gfm(const BranchSet<T>& branches, GfmParams<T>& params, const ForwardOptions<T>& opts,
                 const std::string& tag) {
  validate_branches(branches);
  const std::size_t n = branches.size();
  if (params.widths.size() != n) {
    throw ShapeError("gfm: parameters cover " + std::to_string(params.widths.size()) +
                     " branches, got " + std::to_string(n));
  }
  if (n == 1) return branches;

  BranchSet<T> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const Shape& target = branches[r].shape();
    std::vector<Tensor<T>> terms{branches[r]};
    for (std::size_t s = 0; s < n; ++s) {
      if (s == r) continue;
      GstoSpec<T> spec;
      spec.scale = gated::ScaleTransferSpec{target.h, target.w, target.c,
                                            s > r ? gated::Direction::up : gated::Direction::down};
      spec.gate_mode = params.mode;
      spec.gate_override = override_for(branches[s].shape(), opts);
      auto result = gated::gsto_transfer(branches[s], spec, params.edges[s][r], opts.norm);
      trace_gate(opts, tag + "_" + std::to_string(s) + "to" + std::to_string(r) + "_gate",
                 result.gate);
      terms.push_back(std::move(result.output));
    }
    out[r] = nn::add_n(terms);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GTM

template <typename T>
GtmParams<T> make_gtm(ParamStore<T>& store, const std::string& name, int in_channels,
                      int out_channels, int classes, GateMode mode, std::uint64_t seed,
                      const nn::NormConfig& norm) {
  GtmParams<T> p;
  p.mode = mode;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.gsto.gate = gated::make_gate_params(store, name + ".gate", in_channels, classes, mode, seed);
  p.gsto.channel = nn::make_cbr(store, name + ".channel",
                                nn::ConvSpec{.in = in_channels, .out = out_channels}, seed, true,
                                true, static_cast<T>(norm.momentum), static_cast<T>(norm.eps));
  return p;
}

template <typename T>
GtmResult<T> gtm(const BranchSet<T>& branches, GtmParams<T>& params, const ForwardOptions<T>& opts) {
  validate_branches(branches);
  const Shape& b0 = branches.front().shape();
  const Shape& last = branches.back().shape();
  if (last.h % 2 != 0 || last.w % 2 != 0) {
    throw ShapeError("gtm: lowest branch " + last.str() + " has odd extents");
  }
  std::vector<Tensor<T>> parts{branches.front()};
  for (std::size_t k = 1; k < branches.size(); ++k) {
    parts.push_back(nn::bilinear_upsample(branches[k], b0.h, b0.w));
  }
  Tensor<T> united = nn::concat_channels(parts);
  if (united.shape().c != params.in_channels) {
    throw ShapeError("gtm: united width " + std::to_string(united.shape().c) + " but params expect " +
                     std::to_string(params.in_channels));
  }
  GstoSpec<T> spec;
  spec.scale = gated::ScaleTransferSpec{last.h / 2, last.w / 2, params.out_channels,
                                        gated::Direction::down};
  spec.gate_mode = params.mode;
  spec.gate_override = override_for(united.shape(), opts);
  auto r = gated::gsto_transfer(united, spec, params.gsto, opts.norm);
  return {std::move(r.output), std::move(r.probability), std::move(r.gate)};
}

// ---------------------------------------------------------------------------
// PPM

template <typename T>
PpmParams<T> make_ppm(ParamStore<T>& store, const std::string& name, int channels,
                      std::vector<int> bins, int out_channels, int classes, GateMode mode,
                      std::uint64_t seed, const nn::NormConfig& norm) {
  if (bins.empty()) throw std::invalid_argument("ppm: no pyramid levels");
  PpmParams<T> p;
  p.mode = mode;
  p.bins = std::move(bins);
  p.classes = classes;
  const int levels = static_cast<int>(p.bins.size());
  const int reduced = std::max(1, channels / levels);
  const T mom = static_cast<T>(norm.momentum);
  const T eps = static_cast<T>(norm.eps);
  if (mode == GateMode::supervised) {
    p.shared_predictor = nn::make_conv(store, name + ".gate.predictor",
                                       nn::ConvSpec{.in = channels, .out = classes}, seed,
                                       nn::Init::fan_in, ParamKind::gate);
  }
  for (int l = 0; l < levels; ++l) {
    const std::string lvl = name + ".level" + std::to_string(l);
    gated::GatePredictorParams<T> g;
    g.mode = mode;
    if (mode == GateMode::unsupervised) {
      g = gated::make_gate_params(store, lvl + ".gate", channels, classes, mode, seed);
    } else if (mode == GateMode::supervised) {
      g.predictor = p.shared_predictor;
      g.theta = nn::make_conv(store, lvl + ".gate.theta", nn::ConvSpec{.in = classes, .out = 1},
                              seed, nn::Init::fan_in, ParamKind::gate);
    }
    p.gates.push_back(std::move(g));
    p.reduce.push_back(nn::make_cbr(store, lvl + ".reduce",
                                    nn::ConvSpec{.in = channels, .out = reduced}, seed, true, true,
                                    mom, eps));
  }
  p.fuse = nn::make_cbr(store, name + ".fuse",
                        nn::ConvSpec{.in = channels + levels * reduced,
                                     .out = out_channels,
                                     .kernel = 3,
                                     .padding = 1},
                        seed, true, true, mom, eps);
  return p;
}

template <typename T>
PyramidResult<T> gsto_ppm(const Tensor<T>& f, PpmParams<T>& params, const ForwardOptions<T>& opts) {
  const Shape& fs = f.shape();
  PyramidResult<T> result;
  if (params.mode == GateMode::supervised) {
    result.probability = ProbabilityMap<T>{nn::conv2d(f, params.shared_predictor)};
  }
  std::vector<Tensor<T>> parts{f};
  for (std::size_t l = 0; l < params.bins.size(); ++l) {
    const int bin = params.bins[l];
    if (bin > fs.h || bin > fs.w) {
      throw ShapeError("gsto_ppm: bin " + std::to_string(bin) + " exceeds input " + fs.str());
    }
    std::optional<GateMap<T>> gate = override_for(fs, opts);
    if (!gate && params.mode == GateMode::unsupervised) {
      gate = gated::compute_gate_unsupervised(f, params.gates[l].rho);
    } else if (!gate && params.mode == GateMode::supervised) {
      gate = gated::gate_from_probability(*result.probability, params.gates[l].theta);
    }
    trace_gate(opts, "ppm_level" + std::to_string(l) + "_gate", gate);
    Tensor<T> x = gate ? gated::apply_gate(f, *gate) : f;
    x = nn::adaptive_avg_pool(x, bin, bin);
    x = nn::apply_cbr(x, params.reduce[l], opts.norm);
    x = nn::bilinear_upsample(x, fs.h, fs.w);
    result.levels.push_back(x);
    parts.push_back(x);
  }
  result.output = nn::apply_cbr(nn::concat_channels(parts), params.fuse, opts.norm);
  return result;
}

// ---------------------------------------------------------------------------
// ASPP

template <typename T>
AsppParams<T> make_aspp(ParamStore<T>& store, const std::string& name, int channels,
                        std::vector<int> rates, int branch_channels, int out_channels,
                        int classes, GateMode mode, bool image_branch, std::uint64_t seed,
                        const nn::NormConfig& norm) {
  if (rates.empty()) throw std::invalid_argument("aspp: no rates");
  AsppParams<T> p;
  p.mode = mode;
  p.rates = std::move(rates);
  p.image_branch = image_branch;
  p.classes = classes;
  const T mom = static_cast<T>(norm.momentum);
  const T eps = static_cast<T>(norm.eps);
  if (mode == GateMode::supervised) {
    p.shared_predictor = nn::make_conv(store, name + ".gate.predictor",
                                       nn::ConvSpec{.in = channels, .out = classes}, seed,
                                       nn::Init::fan_in, ParamKind::gate);
  }
  const std::size_t n_gated = p.rates.size() + (image_branch ? 1 : 0);
  for (std::size_t b = 0; b < n_gated; ++b) {
    const std::string br = name + ".branch" + std::to_string(b);
    gated::GatePredictorParams<T> g;
    g.mode = mode;
    if (mode == GateMode::unsupervised) {
      g = gated::make_gate_params(store, br + ".gate", channels, classes, mode, seed);
    } else if (mode == GateMode::supervised) {
      g.predictor = p.shared_predictor;
      g.theta = nn::make_conv(store, br + ".gate.theta", nn::ConvSpec{.in = classes, .out = 1}, seed,
                              nn::Init::fan_in, ParamKind::gate);
    }
    p.gates.push_back(std::move(g));
    if (b < p.rates.size()) {
      const int rate = p.rates[b];
      if (rate < 1) throw std::invalid_argument("aspp: rates must be positive");
      nn::ConvSpec spec{.in = channels, .out = branch_channels};
      if (rate > 1) {
        spec.kernel = 3;
        spec.padding = rate;
        spec.dilation = rate;
      }
      p.branches.push_back(nn::make_cbr(store, br + ".conv", spec, seed, true, true, mom, eps));
    } else {
      p.image_conv = nn::make_cbr(store, br + ".conv",
                                  nn::ConvSpec{.in = channels, .out = branch_channels}, seed, true,
                                  true, mom, eps);
    }
  }
  const int cat = static_cast<int>(n_gated) * branch_channels;
  p.fuse = nn::make_cbr(store, name + ".fuse", nn::ConvSpec{.in = cat, .out = out_channels}, seed,
                        true, true, mom, eps);
  return p;
}

template <typename T>
PyramidResult<T> gsto_aspp(const Tensor<T>& f, AsppParams<T>& params, const ForwardOptions<T>& opts) {
  const Shape& fs = f.shape();
  for (int rate : params.rates) {
    if (rate > 1 && (rate >= fs.h || rate >= fs.w)) {
      throw ShapeError("gsto_aspp: rate " + std::to_string(rate) +
                       " reaches past the padded border of " + fs.str());
    }
  }
  PyramidResult<T> result;
  if (params.mode == GateMode::supervised) {
    result.probability = ProbabilityMap<T>{nn::conv2d(f, params.shared_predictor)};
  }
  auto gated_input = [&](std::size_t b) {
    std::optional<GateMap<T>> gate = override_for(fs, opts);
    if (!gate && params.mode == GateMode::unsupervised) {
      gate = gated::compute_gate_unsupervised(f, params.gates[b].rho);
    } else if (!gate && params.mode == GateMode::supervised) {
      gate = gated::gate_from_probability(*result.probability, params.gates[b].theta);
    }
    trace_gate(opts, "aspp_branch" + std::to_string(b) + "_gate", gate);
    return gate ? gated::apply_gate(f, *gate) : f;
  };
  std::vector<Tensor<T>> parts;
  for (std::size_t b = 0; b < params.rates.size(); ++b) {
    Tensor<T> x = nn::apply_cbr(gated_input(b), params.branches[b], opts.norm);
    result.levels.push_back(x);
    parts.push_back(x);
  }
  if (params.image_branch) {
    Tensor<T> x = nn::adaptive_avg_pool(gated_input(params.rates.size()), 1, 1);
    x = nn::apply_cbr(x, params.image_conv, opts.norm);
    x = nn::bilinear_upsample(x, fs.h, fs.w);
    result.levels.push_back(x);
    parts.push_back(x);
  }
  result.output = nn::apply_cbr(nn::concat_channels(parts), params.fuse, opts.norm);
  return result;
}

// ---------------------------------------------------------------------------
// GstoHrnet

template <typename T>
GstoHrnet<T>::GstoHrnet(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::uint64_t seed = config_.seed;
  const int w = config_.width;
  const nn::NormConfig norm{config_.bn_momentum, config_.bn_eps};
  const T mom = static_cast<T>(norm.momentum);
  const T eps = static_cast<T>(norm.eps);
  auto cbr3 = [&](const std::string& name, int in, int out, int stride, bool relu) {
    return nn::make_cbr(store_, name,
                        nn::ConvSpec{.in = in, .out = out, .kernel = 3, .stride = stride, .padding = 1},
                        seed, true, relu, mom, eps);
  };

  stem1_ = cbr3("stem.conv1", 3, w, 2, true);
  stem2_ = cbr3("stem.conv2", w, w, 2, true);

  std::vector<int> widths{w};
  blocks_.resize(config_.stages);
  fusions_.resize(config_.stages);
  for (int s = 0; s < config_.stages; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    for (int u = 0; u < config_.blocks; ++u) {
      const std::string unit = stage + ".unit" + std::to_string(u);
      std::vector<BasicBlock> round;
      for (std::size_t b = 0; b < widths.size(); ++b) {
        const std::string br = unit + ".branch" + std::to_string(b);
        round.push_back(BasicBlock{cbr3(br + ".conv1", widths[b], widths[b], 1, true),
                                   cbr3(br + ".conv2", widths[b], widths[b], 1, false)});
      }
      blocks_[s].push_back(std::move(round));
      const std::string fuse = unit + ".gfm";
      fusions_[s].push_back(make_gfm(store_, fuse, widths, config_.gfm_mode, seed, norm));
      for (std::size_t src = 0; src < widths.size() && widths.size() > 1; ++src) {
        for (std::size_t dst = 0; dst < widths.size(); ++dst) {
          if (src == dst || config_.gfm_mode == GateMode::none) continue;
          sites_.push_back({fuse + "." + std::to_string(src) + "to" + std::to_string(dst),
                            widths[src], 0, config_.gfm_mode});
        }
      }
    }
    if (s == 0 && config_.has_stage1_aux_head()) {
      aux_head_ = nn::make_conv(store_, "aux1.classifier",
                                nn::ConvSpec{.in = w, .out = config_.classes}, seed, nn::Init::fan_in);
    }
    if (s + 1 < config_.stages) {
      const int new_width = widths.back() * 2;
      const std::string name = "transition" + std::to_string(s + 1);
      if (config_.transition == Transition::gtm) {
        int united = 0;
        for (int c : widths) united += c;
        const GateMode mode = config_.gtm_modes[s];
        transitions_gtm_.push_back(
            make_gtm(store_, name, united, new_width, config_.classes, mode, seed, norm));
        if (mode != GateMode::none) sites_.push_back({name, united, config_.classes, mode});
      } else {
        transitions_conv_.push_back(cbr3(name + ".conv", widths.back(), new_width, 2, true));
      }
      widths.push_back(new_width);
    }
  }
  int head_in = 0;
  for (int c : widths) head_in += c;
  classifier_ = nn::make_conv(store_, "head.classifier",
                              nn::ConvSpec{.in = head_in, .out = config_.classes}, seed,
                              nn::Init::fan_in);
}

template <typename T>
Tensor<T> GstoHrnet<T>::run_block(const Tensor<T>& x, BasicBlock& block, nn::NormMode mode) {
  Tensor<T> y = nn::apply_cbr(x, block.conv1, mode);
  y = nn::apply_cbr(y, block.conv2, mode);
  return nn::relu(nn::add(y, x));
}

template <typename T>
NetOutput<T> GstoHrnet<T>::forward(const Tensor<T>& image, const ForwardOptions<T>& opts) {
  const Shape& is = image.shape();
  if (is.c != 3 || is.h != config_.input_h || is.w != config_.input_w) {
    throw ShapeError("gsto_hrnet: expected (N,3," + std::to_string(config_.input_h) + "," +
                     std::to_string(config_.input_w) + ") input, got " + is.str());
  }
  NetOutput<T> out;
  Tensor<T> x = nn::apply_cbr(image, stem1_, opts.norm);
  x = nn::apply_cbr(x, stem2_, opts.norm);
  BranchSet<T> branches{x};

  for (int s = 0; s < config_.stages; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    for (int u = 0; u < config_.blocks; ++u) {
      for (std::size_t b = 0; b < branches.size(); ++b) {
        branches[b] = run_block(branches[b], blocks_[s][u][b], opts.norm);
      }
      branches = gfm(branches, fusions_[s][u], opts, stage + "_gfm" + std::to_string(u));
    }
    if (opts.trace != nullptr) {
      for (std::size_t b = 0; b < branches.size(); ++b) {
        opts.trace->features.emplace_back(stage + "_branch" + std::to_string(b) + "_feature",
                                          branches[b]);
      }
    }
    if (s == 0 && aux_head_) out.stage_logits[0] = nn::conv2d(branches[0], *aux_head_);
    if (s + 1 < config_.stages) {
      if (config_.transition == Transition::gtm) {
        auto t = gtm(branches, transitions_gtm_[s], opts);
        trace_gate(opts, stage + "_gtm_gate", t.gate);
        if (t.probability) {
          out.stage_logits[s] = t.probability->logits;
          out.aux.push_back(*t.probability);
        }
        branches.push_back(std::move(t.branch));
      } else {
        branches.push_back(nn::apply_cbr(branches.back(), transitions_conv_[s], opts.norm));
      }
    }
  }

  const Shape& b0 = branches.front().shape();
  std::vector<Tensor<T>> parts{branches.front()};
  for (std::size_t b = 1; b < branches.size(); ++b) {
    parts.push_back(nn::bilinear_upsample(branches[b], b0.h, b0.w));
  }
  Tensor<T> logits = nn::conv2d(nn::concat_channels(parts), classifier_);
  out.logits = nn::bilinear_upsample(logits, is.h, is.w);
  return out;
}

template <typename T>
std::size_t GstoHrnet<T>::gate_param_total() const {
  std::size_t total = 0;
  for (const auto& site : sites_) total += gated::gate_param_count(site.channels, site.classes, site.mode);
  return total;
}

template <typename T>
std::size_t GstoHrnet<T>::gate_param_stored() const {
  return store_.param_count_if(
      [](const ParamEntry<T>& e) { return e.name.find(".gate.") != std::string::npos; });
}

template <typename T>
std::size_t GstoHrnet<T>::inference_param_count() const {
  return store_.param_count_if([](const ParamEntry<T>& e) { return !e.name.starts_with("aux1."); });
}

#define GSTO_INSTANTIATE(T)                                                                     \
  template void validate_branches<T>(const BranchSet<T>&);                                     \
  template GfmParams<T> make_gfm<T>(ParamStore<T>&, const std::string&, const std::vector<int>&, \
                                    GateMode, std::uint64_t, const nn::NormConfig&);            \
  template BranchSet<T> gfm<T>(const BranchSet<T>&, GfmParams<T>&, const ForwardOptions<T>&,    \
                               const std::string&);                                            \
  template GtmParams<T> make_gtm<T>(ParamStore<T>&, const std::string&, int, int, int, GateMode, \
                                    std::uint64_t, const nn::NormConfig&);                      \
  template GtmResult<T> gtm<T>(const BranchSet<T>&, GtmParams<T>&, const ForwardOptions<T>&);   \
  template PpmParams<T> make_ppm<T>(ParamStore<T>&, const std::string&, int, std::vector<int>,  \
                                    int, int, GateMode, std::uint64_t, const nn::NormConfig&);  \
  template PyramidResult<T> gsto_ppm<T>(const Tensor<T>&, PpmParams<T>&, const ForwardOptions<T>&); \
  template AsppParams<T> make_aspp<T>(ParamStore<T>&, const std::string&, int, std::vector<int>, \
                                      int, int, int, GateMode, bool, std::uint64_t,             \
                                      const nn::NormConfig&);                                   \
  template PyramidResult<T> gsto_aspp<T>(const Tensor<T>&, AsppParams<T>&,                      \
                                         const ForwardOptions<T>&);                             \
  template class GstoHrnet<T>;

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto::msnet
