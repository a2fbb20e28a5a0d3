#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsto/gated.hpp"
#include "gsto/layers.hpp"
#include "gsto/param_store.hpp"

namespace gsto::msnet {

using gated::GateMode;

/// How a stage spawns its next lower-resolution branch.
enum class Transition {
  gtm,          // gated transition over the upsampled union of all branches
  stride_conv,  // 3x3 stride-2 conv on the current lowest branch
};

const char* to_string(Transition t);
Transition parse_transition(const std::string& s);

/// Toy GSTO-HRNet topology. Four stages; stage s runs s parallel branches.
struct NetConfig {
  int width = 8;   // branch k carries width * 2^k channels
  int blocks = 2;  // basic-block rounds per stage, each followed by a fusion
  int classes = 4;
  int stages = 4;
  GateMode gfm_mode = GateMode::unsupervised;
  std::array<GateMode, 3> gtm_modes{GateMode::unsupervised, GateMode::supervised,
                                    GateMode::supervised};
  Transition transition = Transition::gtm;
  /// Supplies loss_1 through a 1x1 head on the stage-1 output when the network
  /// is supervised but the stage-1 transition is not.
  bool stage1_aux_head = true;
  std::array<double, 4> loss_weights{0.2, 0.3, 0.5, 1.0};
  int input_h = 64;
  int input_w = 64;
  std::uint64_t seed = 1;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  bool operator==(const NetConfig&) const = default;

  /// Throws std::invalid_argument on a malformed topology or geometry.
  void validate() const;
  bool any_supervised() const;
  bool has_stage1_aux_head() const;
  /// Input extents must be divisible by this (stem /4, then three halvings).
  int geometry_divisor() const { return 1 << (stages + 1); }
};

/// Branch k has half the resolution and twice the width of branch k-1.
template <typename T>
using BranchSet = std::vector<Tensor<T>>;

/// Throws ShapeError unless the ladder halves resolution and doubles width per step.
template <typename T>
void validate_branches(const BranchSet<T>& branches);

/// Named feature and gate maps captured during a forward pass.
template <typename T>
struct ForwardTrace {
  std::vector<std::pair<std::string, Tensor<T>>> features;
  std::vector<std::pair<std::string, gated::GateMap<T>>> gates;
};

template <typename T>
struct ForwardOptions {
  nn::NormMode norm = nn::NormMode::train;
  /// Constant gate applied at every gate site in place of the computed gate.
  std::optional<T> gate_override;
  ForwardTrace<T>* trace = nullptr;
};

// --- Gated Fusion Module ---------------------------------------------------

template <typename T>
struct GfmParams {
  GateMode mode = GateMode::none;
  std::vector<int> widths;
  /// edges[src][dst] for src != dst.
  std::vector<std::vector<gated::GstoParams<T>>> edges;
};

template <typename T>
GfmParams<T> make_gfm(ParamStore<T>& store, const std::string& name, const std::vector<int>& widths,
                      GateMode mode, std::uint64_t seed, const nn::NormConfig& norm = {});

/// Dense fusion: out_r = in_r + sum_{s != r} gsto(in_s -> shape of in_r), s ascending.
template <typename T>
BranchSet<T> gfm(const BranchSet<T>& branches, GfmParams<T>& params,
                 const ForwardOptions<T>& opts = {}, const std::string& tag = "gfm");

// --- Gated Transition Module -----------------------------------------------

template <typename T>
struct GtmParams {
  GateMode mode = GateMode::none;
  int in_channels = 0;  // width of the concatenated union
  int out_channels = 0;
  gated::GstoParams<T> gsto;
};

template <typename T>
GtmParams<T> make_gtm(ParamStore<T>& store, const std::string& name, int in_channels,
                      int out_channels, int classes, GateMode mode, std::uint64_t seed,
                      const nn::NormConfig& norm = {});

template <typename T>
struct GtmResult {
  Tensor<T> branch;
  std::optional<gated::ProbabilityMap<T>> probability;
  std::optional<gated::GateMap<T>> gate;
};

/// Upsamples every branch to branch-0 resolution, concatenates along channels
/// and applies one gated transfer down to half the lowest branch's resolution.
template <typename T>
GtmResult<T> gtm(const BranchSet<T>& branches, GtmParams<T>& params,
                 const ForwardOptions<T>& opts = {});

// --- GSTO pyramid pooling ---------------------------------------------------

template <typename T>
struct PpmParams {
  GateMode mode = GateMode::none;
  std::vector<int> bins;
  int classes = 0;
  std::vector<gated::GatePredictorParams<T>> gates;  // one per level
  nn::Conv2dParams<T> shared_predictor;              // supervised: one P for all levels
  std::vector<nn::Cbr<T>> reduce;                    // 1x1, C -> C / levels
  nn::Cbr<T> fuse;                                   // 3x3 over [F, levels...]
};

template <typename T>
PpmParams<T> make_ppm(ParamStore<T>& store, const std::string& name, int channels,
                      std::vector<int> bins, int out_channels, int classes, GateMode mode,
                      std::uint64_t seed, const nn::NormConfig& norm = {});

template <typename T>
struct PyramidResult {
  Tensor<T> output;
  std::optional<gated::ProbabilityMap<T>> probability;
  std::vector<Tensor<T>> levels;  // per-branch features at the input resolution
};

/// Per level: gate F, adaptive-pool to the bin size, reduce with a 1x1 CBR,
/// upsample back; then concatenate [F, levels] and fuse with a CBR.
template <typename T>
PyramidResult<T> gsto_ppm(const Tensor<T>& f, PpmParams<T>& params,
                          const ForwardOptions<T>& opts = {});

// --- GSTO atrous spatial pyramid pooling ------------------------------------

template <typename T>
struct AsppParams {
  GateMode mode = GateMode::none;
  std::vector<int> rates;
  bool image_branch = true;
  int classes = 0;
  std::vector<gated::GatePredictorParams<T>> gates;  // one per branch, image branch last
  nn::Conv2dParams<T> shared_predictor;
  std::vector<nn::Cbr<T>> branches;  // rate 1 -> 1x1, else 3x3 dilated
  nn::Cbr<T> image_conv;
  nn::Cbr<T> fuse;  // 1x1 over the concatenation
};

template <typename T>
AsppParams<T> make_aspp(ParamStore<T>& store, const std::string& name, int channels,
                        std::vector<int> rates, int branch_channels, int out_channels,
                        int classes, GateMode mode, bool image_branch, std::uint64_t seed,
                        const nn::NormConfig& norm = {});

template <typename T>
PyramidResult<T> gsto_aspp(const Tensor<T>& f, AsppParams<T>& params,
                           const ForwardOptions<T>& opts = {});

// --- toy GSTO-HRNet ---------------------------------------------------------

template <typename T>
struct NetOutput {
  Tensor<T> logits;  // (N, classes, input_h, input_w)
  /// P from each supervised transition, in stage order.
  std::vector<gated::ProbabilityMap<T>> aux;
  /// Source of loss_1..loss_3 at branch-0 resolution, if any.
  std::array<std::optional<Tensor<T>>, 3> stage_logits;
};

struct GateSite {
  std::string name;
  int channels;
  int classes;
  GateMode mode;
};

template <typename T>
class GstoHrnet {
 public:
  explicit GstoHrnet(NetConfig config);

  NetOutput<T> forward(const Tensor<T>& image, const ForwardOptions<T>& opts = {});

  const NetConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  /// Every gated transfer in the network with its input width and mode.
  const std::vector<GateSite>& gate_sites() const { return sites_; }
  /// Sum of gate_param_count over gate_sites().
  std::size_t gate_param_total() const;
  /// Parameters stored under gate sites, counted from the ParamStore.
  std::size_t gate_param_stored() const;
  /// Parameters needed at inference (excludes the stage-1 training head).
  std::size_t inference_param_count() const;

 private:
  struct BasicBlock {
    nn::Cbr<T> conv1;
    nn::Cbr<T> conv2;
  };

  Tensor<T> run_block(const Tensor<T>& x, BasicBlock& block, nn::NormMode mode);

  NetConfig config_;
  ParamStore<T> store_;
  std::vector<GateSite> sites_;
  nn::Cbr<T> stem1_;
  nn::Cbr<T> stem2_;
  std::vector<std::vector<std::vector<BasicBlock>>> blocks_;  // [stage][unit][branch]
  std::vector<std::vector<GfmParams<T>>> fusions_;            // [stage][unit]
  std::vector<GtmParams<T>> transitions_gtm_;
  std::vector<nn::Cbr<T>> transitions_conv_;
  nn::Conv2dParams<T> classifier_;
  std::optional<nn::Conv2dParams<T>> aux_head_;
};

}  // namespace gsto::msnet
