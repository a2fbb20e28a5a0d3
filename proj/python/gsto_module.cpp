#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "gsto/audit.hpp"
#include "gsto/config.hpp"
#include "gsto/experiment.hpp"
#include "gsto/gated.hpp"
#include "gsto/loss.hpp"
#include "gsto/metrics.hpp"
#include "gsto/msnet.hpp"
#include "gsto/optim.hpp"
#include "gsto/synth.hpp"
#include "gsto/tensor_io.hpp"

namespace py = pybind11;
using namespace gsto;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const Array<T>& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-D (N, C, H, W) array, got " + std::to_string(a.ndim()) + "-D");
  const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3))};
  return Tensor<T>::from(s, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Tensor<T>& t) {
  const Shape& s = t.shape();
  Array<T> out({s.n, s.c, s.h, s.w});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

using D = double;

nn::Conv2dParams<D> conv_params(const Array<D>& w, const std::optional<Array<D>>& b, int stride = 1,
                                int padding = 0, int dilation = 1) {
  nn::Conv2dParams<D> p;
  p.weight = to_tensor(w);
  if (b) {
    if (b->ndim() != 1) throw ShapeError("bias must be 1-D");
    p.bias = Tensor<D>::from(Shape{1, static_cast<int>(b->shape(0)), 1, 1},
                             std::vector<D>(b->data(), b->data() + b->size()));
  }
  p.stride = stride;
  p.padding = padding;
  p.dilation = dilation;
  return p;
}

gated::Direction direction_for(int in_h, int out_h) {
  if (out_h == in_h) return gated::Direction::same;
  return out_h > in_h ? gated::Direction::up : gated::Direction::down;
}

LabelMap to_labels(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("labels must be (H, W) or (N, H, W)");
  const bool batched = a.ndim() == 3;
  LabelMap m(batched ? a.shape(0) : 1, a.shape(batched ? 1 : 0), a.shape(batched ? 2 : 1));
  std::copy(a.data(), a.data() + a.size(), m.values.begin());
  return m;
}

py::array_t<std::int32_t> from_labels(const LabelMap& m) {
  py::array_t<std::int32_t> out({m.n, m.h, m.w});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

template <typename T>
void bind_network(py::module_& m, const char* name) {
  using Net = msnet::GstoHrnet<T>;
  py::class_<Net>(m, name)
      .def(py::init([](const std::string& variant, int width, int blocks, int size, std::uint64_t seed) {
             msnet::NetConfig c;
             c.width = width;
             c.blocks = blocks;
             c.input_h = c.input_w = size;
             c.seed = seed;
             return std::make_unique<Net>(cli::variant_config(c, variant));
           }),
           py::arg("variant") = "full", py::arg("width") = 8, py::arg("blocks") = 2,
           py::arg("size") = 64, py::arg("seed") = 1)
      .def(
          "forward",
          [](Net& net, const Array<T>& image, bool train, std::optional<T> gate_override) {
            msnet::ForwardOptions<T> o;
            o.norm = train ? nn::NormMode::train : nn::NormMode::eval;
            o.gate_override = gate_override;
            return to_array(net.forward(to_tensor(image), o).logits);
          },
          py::arg("image"), py::arg("train") = false, py::arg("gate_override") = py::none(),
          "Class logits (N, classes, H, W).")
      .def(
          "trace",
          [](Net& net, const Array<T>& image) {
            msnet::ForwardTrace<T> trace;
            msnet::ForwardOptions<T> o;
            o.norm = nn::NormMode::eval;
            o.trace = &trace;
            net.forward(to_tensor(image), o);
            py::dict out;
            for (const auto& [k, v] : trace.features) out[py::str(k)] = to_array(v);
            for (const auto& [k, g] : trace.gates) out[py::str(k)] = to_array(g.values);
            return out;
          },
          py::arg("image"), "Branch features and gate maps by name (eval mode).")
      .def_property_readonly("param_count", [](const Net& n) { return n.params().total_param_count(); })
      .def_property_readonly("inference_param_count", &Net::inference_param_count)
      .def_property_readonly("gate_param_count", &Net::gate_param_total)
      .def_property_readonly("gate_sites",
                             [](const Net& n) {
                               std::vector<py::tuple> out;
                               for (const auto& s : n.gate_sites()) {
                                 out.push_back(py::make_tuple(s.name, s.channels, s.classes,
                                                              gated::to_string(s.mode)));
                               }
                               return out;
                             })
      .def("param_names",
           [](const Net& n) {
             std::vector<std::string> out;
             for (const auto& e : n.params().entries()) out.push_back(e.name);
             return out;
           })
      .def("get_param", [](const Net& n, const std::string& k) { return to_array(n.params().get(k)); })
      .def("save", [](const Net& n, const std::string& path) { n.params().save(path); })
      .def("load", [](Net& n, const std::string& path) { n.params().load(path); })
      .def("checkpoint_bytes", [](const Net& n) {
        std::ostringstream os;
        n.params().save(os);
        return py::bytes(os.str());
      });
}

cli::RunConfig config_from(const std::map<std::string, std::string>& settings) {
  cli::RunConfig cfg;
  for (const auto& [k, v] : settings) cfg.set(k, v);
  return cfg;
}

py::dict summary_dict(const cli::TrainSummary& s) {
  py::dict d;
  d["iters"] = s.iters;
  d["final_loss"] = s.final_loss;
  d["train_pixel_accuracy"] = s.train.pixel_accuracy;
  d["train_miou"] = s.train.miou;
  if (s.val) {
    d["val_pixel_accuracy"] = s.val->pixel_accuracy;
    d["val_miou"] = s.val->miou;
  }
  d["params"] = s.params;
  d["inference_params"] = s.inference_params;
  d["gate_params"] = s.gate_params;
  d["seconds"] = s.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gated scale-transfer operations and the toy multi-branch segmentation network";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<TapeError>(m, "TapeError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);

  // ---- primitive ops (float64)
  m.def("conv2d",
        [](const Array<D>& x, const Array<D>& w, std::optional<Array<D>> b, int stride, int padding,
           int dilation) { return to_array(nn::conv2d(to_tensor(x), conv_params(w, b, stride, padding, dilation))); },
        py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
        py::arg("padding") = 0, py::arg("dilation") = 1);
  m.def("relu", [](const Array<D>& x) { return to_array(nn::relu(to_tensor(x))); });
  m.def("sigmoid", [](const Array<D>& x) { return to_array(nn::sigmoid(to_tensor(x))); });
  m.def("bilinear_upsample",
        [](const Array<D>& x, int h, int w) { return to_array(nn::bilinear_upsample(to_tensor(x), h, w)); },
        py::arg("x"), py::arg("out_h"), py::arg("out_w"));
  m.def("avg_pool_down", [](const Array<D>& x, int f) { return to_array(nn::avg_pool_down(to_tensor(x), f)); },
        py::arg("x"), py::arg("factor"));
  m.def("adaptive_avg_pool",
        [](const Array<D>& x, int bh, int bw) { return to_array(nn::adaptive_avg_pool(to_tensor(x), bh, bw)); },
        py::arg("x"), py::arg("bins_h"), py::arg("bins_w"));
  m.def("batch_norm_eval",
        [](const Array<D>& x, const Array<D>& gamma, const Array<D>& beta, const Array<D>& mean,
           const Array<D>& var, double eps) {
          nn::NormParams<D> p{to_tensor(gamma), to_tensor(beta), to_tensor(mean), to_tensor(var)};
          p.eps = eps;
          p.mode = nn::NormMode::eval;
          return to_array(nn::batch_norm(to_tensor(x), p));
        },
        py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("mean"), py::arg("var"),
        py::arg("eps") = 1e-5, "Parameters are (1, C, 1, 1) arrays.");

  // ---- gates and gated transfer (float64)
  m.def("gate_unsupervised",
        [](const Array<D>& f, const Array<D>& w, const Array<D>& b) {
          return to_array(gated::compute_gate_unsupervised(to_tensor(f), conv_params(w, b)).values);
        },
        py::arg("f"), py::arg("rho_weight"), py::arg("rho_bias"),
        "g = sigmoid(rho . F + b); rho_weight is (1, C, 1, 1).");
  m.def("gate_supervised",
        [](const Array<D>& f, const Array<D>& pw, const Array<D>& pb, const Array<D>& tw, const Array<D>& tb) {
          gated::GatePredictorParams<D> p;
          p.mode = gated::GateMode::supervised;
          p.predictor = conv_params(pw, pb);
          p.theta = conv_params(tw, tb);
          auto [g, prob] = gated::compute_gate_supervised(to_tensor(f), p);
          return py::make_tuple(to_array(g.values), to_array(prob.logits));
        },
        py::arg("f"), py::arg("predictor_weight"), py::arg("predictor_bias"), py::arg("theta_weight"),
        py::arg("theta_bias"), "Returns (g, P) with P = W F + b and g = sigmoid(theta . P + b).");
  m.def("apply_gate", [](const Array<D>& f, const Array<D>& g) {
    return to_array(gated::apply_gate(to_tensor(f), gated::GateMap<D>{to_tensor(g)}));
  });
  m.def("scale_transfer",
        [](const Array<D>& f, int out_h, int out_w, const Array<D>& w, const Array<D>& b,
           std::optional<Array<D>> gate) {
          const Tensor<D> x = to_tensor(f);
          gated::ChannelMap<D> channel{conv_params(w, b), std::nullopt, false};
          gated::ScaleTransferSpec scale{out_h, out_w, static_cast<int>(w.shape(0)),
                                         direction_for(x.shape().h, out_h)};
          if (!gate) return to_array(gated::st_transfer(x, scale, channel));
          gated::GstoParams<D> params{{}, channel};
          gated::GstoSpec<D> spec{scale, gated::GateMode::none, gated::GateMap<D>{to_tensor(*gate)}};
          return to_array(gated::gsto_transfer(x, spec, params).output);
        },
        py::arg("f"), py::arg("out_h"), py::arg("out_w"), py::arg("weight"), py::arg("bias"),
        py::arg("gate") = py::none(),
        "1x1 channel map then resize; with `gate`, the feature is gated first.");
  m.def("gate_param_count",
        [](int channels, int classes, const std::string& mode) {
          return gated::gate_param_count(channels, classes, gated::parse_gate_mode(mode));
        },
        py::arg("channels"), py::arg("classes"), py::arg("mode"));

  // ---- network
  bind_network<float>(m, "NetworkF32");
  bind_network<double>(m, "NetworkF64");

  // ---- data, metrics, loss, schedule
  m.def("synth_generate",
        [](std::uint64_t index, int height, int width, std::uint64_t seed) {
          train::SynthSpec s;
          s.height = height;
          s.width = width;
          s.seed = seed;
          auto sample = train::synth_generate<float>(s, index);
          return py::make_tuple(to_array(sample.image), from_labels(sample.labels));
        },
        py::arg("index"), py::arg("height") = 64, py::arg("width") = 64, py::arg("seed") = 1,
        "Returns (image (1, 3, H, W) float32, labels (1, H, W) int32).");
  m.def("miou",
        [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt, int classes,
           std::int32_t ignore) {
          auto r = train::miou(to_labels(pred), to_labels(gt), classes, ignore);
          return py::make_tuple(r.mean, r.per_class);
        },
        py::arg("pred"), py::arg("gt"), py::arg("classes"), py::arg("ignore_index") = 255,
        "Returns (mean, per-class IoU with None for absent classes).");
  m.def("pixel_accuracy",
        [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt,
           std::int32_t ignore) { return train::pixel_accuracy(to_labels(pred), to_labels(gt), ignore); },
        py::arg("pred"), py::arg("gt"), py::arg("ignore_index") = 255);
  m.def("cross_entropy",
        [](const Array<D>& logits,
           const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& labels,
           std::int32_t ignore) {
          return train::pixel_cross_entropy(to_tensor(logits), to_labels(labels), ignore).item();
        },
        py::arg("logits"), py::arg("labels"), py::arg("ignore_index") = 255);
  m.def("total_loss",
        [](double main, std::array<std::optional<double>, 3> aux, std::array<double, 4> weights,
           bool drop_loss1) {
          train::LossSpec spec;
          spec.stage_weights = weights;
          spec.drop_loss1 = drop_loss1;
          spec.validate();
          std::array<std::optional<Tensor<D>>, 3> a;
          for (int i = 0; i < 3; ++i)
            if (aux[i]) a[i] = Tensor<D>::scalar(*aux[i]);
          return train::total_loss(Tensor<D>::scalar(main), a, spec).item();
        },
        py::arg("main"), py::arg("aux"), py::arg("weights") = std::array<double, 4>{0.2, 0.3, 0.5, 1.0},
        py::arg("drop_loss1") = false);
  m.def("poly_lr",
        [](double base, int iter, int max_iter, double power) {
          train::OptimState s;
          s.base_lr = base;
          s.current_iter = iter;
          s.max_iter = max_iter;
          s.power = power;
          return train::poly_lr(s);
        },
        py::arg("base_lr"), py::arg("iter"), py::arg("max_iter"), py::arg("power") = 0.9);

  // ---- tensor files
  m.def("save_tensor", [](const std::string& path, const Array<D>& a) { save_tensor(path, to_tensor(a)); });
  m.def("save_tensor_f32", [](const std::string& path, const Array<float>& a) { save_tensor(path, to_tensor(a)); });
  m.def("load_tensor", [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    return to_array(read_tensor_any<D>(is));
  });

  // ---- experiments
  m.def("config_keys", &cli::RunConfig::keys);
  m.def("resolve_config", [](const std::map<std::string, std::string>& settings) {
    cli::RunConfig cfg = config_from(settings);
    cfg.finalize();
    return cfg.echo();
  });
  m.def("train",
        [](const std::map<std::string, std::string>& settings) {
          const cli::RunConfig cfg = config_from(settings);
          std::ostringstream log;
          cli::TrainSummary s;
          {
            py::gil_scoped_release release;
            s = cli::run_train(cfg, log);
          }
          return summary_dict(s);
        },
        py::arg("settings"), "Runs a training job; `settings` maps config keys to text values.");
  m.def("per_op_audit",
        [](double eps, double tol, std::uint64_t seed) {
          const auto r = cli::per_op_audit(eps, tol, seed);
          return py::make_tuple(r.passed(), r.checks.size(), r.text());
        },
        py::arg("eps") = 1e-6, py::arg("tol") = 1e-5, py::arg("seed") = 1,
        "Finite-difference audit of every op; returns (passed, checks, report).");
}
