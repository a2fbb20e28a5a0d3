#include <cmath>
#include <map>

#include "doctest.h"
#include "gsto/gradcheck.hpp"
#include "gsto/loss.hpp"
#include "gsto/metrics.hpp"
#include "gsto/ops.hpp"
#include "gsto/optim.hpp"
#include "gsto/rng.hpp"
#include "gsto/synth.hpp"
#include "test_support.hpp"

using namespace gsto;
using namespace gsto::train;
using gsto::testing::random_tensor;

namespace {

LabelMap labels_of(int n, int h, int w, std::vector<std::int32_t> v) {
  LabelMap m(n, h, w);
  m.values = std::move(v);
  return m;
}

// Cross-entropy straight from the definition, in double.
double ce_oracle(const Tensor<double>& logits, const LabelMap& labels, std::int32_t ignore) {
  const Shape s = logits.shape();
  double acc = 0.0;
  int count = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const int cls = labels.at(n, y, x);
        if (cls == ignore) continue;
        double z = 0.0;
        for (int c = 0; c < s.c; ++c) z += std::exp(logits.at(n, c, y, x));
        acc += -std::log(std::exp(logits.at(n, cls, y, x)) / z);
        ++count;
      }
    }
  }
  return acc / count;
}

Tensor<double> scalar_loss(double v) { return Tensor<double>::scalar(v); }

// IoU per class from explicit pixel lists, no confusion matrix.
std::vector<std::optional<double>> iou_oracle(const std::vector<std::int32_t>& pred,
                                              const std::vector<std::int32_t>& gt, int classes,
                                              std::int32_t ignore) {
  std::vector<std::optional<double>> out(classes);
  for (int c = 0; c < classes; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore) continue;
      const bool p = pred[i] == c;
      const bool g = gt[i] == c;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    if (tp + fp + fn > 0) out[c] = static_cast<double>(tp) / (tp + fp + fn);
  }
  return out;
}

}  // namespace

// ---- cross-entropy

TEST_CASE("uniform logits give ln(classes)") {
  auto logits = Tensor<double>::zeros(Shape{1, 19, 2, 2});
  auto labels = labels_of(1, 2, 2, {0, 5, 11, 18});
  CHECK(pixel_cross_entropy(logits, labels, 255).item() == doctest::Approx(std::log(19.0)).epsilon(1e-14));
}

TEST_CASE("cross-entropy falls towards zero as the margin grows") {
  auto labels = labels_of(1, 1, 1, {1});
  double prev = INFINITY;
  for (double m : {0.0, 1.0, 2.0, 5.0, 10.0, 30.0}) {
    auto logits = Tensor<double>::from(Shape{1, 3, 1, 1}, {0.0, m, 0.0});
    const double l = pixel_cross_entropy(logits, labels, 255).item();
    CHECK(l < prev);
    CHECK(l >= 0.0);
    prev = l;
  }
  CHECK(prev < 1e-12);
}

TEST_CASE("cross-entropy matches the definition and skips ignored pixels") {
  auto logits = random_tensor<double>(Shape{2, 4, 3, 5}, 11, "logits");
  auto rng = SplitMix64::stream(12, "labels");
  LabelMap labels(2, 3, 5);
  for (auto& v : labels.values) v = rng.uniform() < 0.2 ? 255 : rng.uniform_int(0, 3);
  CHECK(pixel_cross_entropy(logits, labels, 255).item() ==
        doctest::Approx(ce_oracle(logits, labels, 255)).epsilon(1e-12));

  // Changing logits under ignored pixels does not move the loss.
  auto shifted = logits.clone();
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 5; ++x)
        if (labels.at(n, y, x) == 255)
          for (int c = 0; c < 4; ++c) shifted.at(n, c, y, x) += 7.0;
  CHECK(pixel_cross_entropy(shifted, labels, 255).item() ==
        pixel_cross_entropy(logits, labels, 255).item());
}

TEST_CASE("cross-entropy gradient matches central differences") {
  auto logits = random_tensor<double>(Shape{1, 4, 3, 3}, 13, "logits", true);
  auto labels = labels_of(1, 3, 3, {0, 1, 2, 3, 255, 1, 0, 2, 2});
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(pixel_cross_entropy(logits, labels, 255));
  }
  auto numeric = finite_diff_grad<double>(
      [&](const Tensor<double>& v) { return pixel_cross_entropy(v, labels, 255).item(); }, logits,
      1e-6);
  auto report = grad_check(logits.grad(), numeric.values(), 1e-6);
  INFO(report.summary());
  CHECK(report.passed);
}

TEST_CASE("cross-entropy errors") {
  auto logits = Tensor<double>::zeros(Shape{1, 3, 2, 2});
  CHECK_THROWS_AS(pixel_cross_entropy(logits, LabelMap(1, 2, 2, 255), 255), std::invalid_argument);
  CHECK_THROWS_AS(pixel_cross_entropy(logits, labels_of(1, 2, 2, {0, 1, 3, 0}), 255),
                  std::invalid_argument);
  CHECK_THROWS_AS(pixel_cross_entropy(logits, labels_of(1, 2, 2, {0, -1, 1, 0}), 255),
                  std::invalid_argument);
  CHECK_THROWS_AS(pixel_cross_entropy(logits, LabelMap(1, 2, 3, 0), 255), ShapeError);
}

// ---- total loss

TEST_CASE("total loss of unit stage losses with default weights is 2") {
  LossSpec spec;
  std::array<std::optional<Tensor<double>>, 3> aux{scalar_loss(1), scalar_loss(1), scalar_loss(1)};
  CHECK(total_loss(scalar_loss(1), aux, spec).item() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("total loss is the weighted sum for random losses") {
  auto rng = SplitMix64::stream(21, "losses");
  for (int t = 0; t < 50; ++t) {
    LossSpec spec;
    spec.stage_weights = {rng.uniform(), rng.uniform(), rng.uniform(), 1.0};
    const double l1 = 3 * rng.uniform(), l2 = 3 * rng.uniform(), l3 = 3 * rng.uniform();
    const double l4 = 3 * rng.uniform();
    std::array<std::optional<Tensor<double>>, 3> aux{scalar_loss(l1), scalar_loss(l2),
                                                     scalar_loss(l3)};
    const double expect = spec.stage_weights[0] * l1 + spec.stage_weights[1] * l2 +
                          spec.stage_weights[2] * l3 + l4;
    CHECK(std::abs(total_loss(scalar_loss(l4), aux, spec).item() - expect) < 1e-12);
  }
}

TEST_CASE("zero auxiliary weights reduce the total to the main loss") {
  LossSpec spec;
  spec.stage_weights = {0, 0, 0, 1};
  std::array<std::optional<Tensor<double>>, 3> aux{};
  CHECK(total_loss(scalar_loss(1.75), aux, spec).item() == 1.75);
}

TEST_CASE("total loss is linear in each stage loss") {
  LossSpec spec;
  for (int k = 0; k < 3; ++k) {
    std::array<std::optional<Tensor<double>>, 3> a{scalar_loss(0.5), scalar_loss(0.5),
                                                   scalar_loss(0.5)};
    const double base = total_loss(scalar_loss(0.5), a, spec).item();
    a[k] = scalar_loss(1.5);
    const double bumped = total_loss(scalar_loss(0.5), a, spec).item();
    CHECK(bumped - base == doctest::Approx(spec.stage_weights[k]).epsilon(1e-12));
  }
}

TEST_CASE("total loss gradients are the stage weights") {
  LossSpec spec;
  std::vector<Tensor<double>> leaves;
  for (int i = 0; i < 4; ++i) leaves.push_back(Tensor<double>::scalar(0.3 * (i + 1), true));
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    std::array<std::optional<Tensor<double>>, 3> aux{leaves[0], leaves[1], leaves[2]};
    tape.backward(total_loss(leaves[3], aux, spec));
  }
  for (int i = 0; i < 4; ++i) CHECK(leaves[i].grad()[0] == doctest::Approx(spec.stage_weights[i]));
}

TEST_CASE("missing stages and drop_loss1") {
  LossSpec spec;
  std::array<std::optional<Tensor<double>>, 3> no1{std::nullopt, scalar_loss(1), scalar_loss(1)};
  CHECK_THROWS_AS(total_loss(scalar_loss(1), no1, spec), std::invalid_argument);
  spec.drop_loss1 = true;
  CHECK(total_loss(scalar_loss(1), no1, spec).item() == doctest::Approx(1.8));
  std::array<std::optional<Tensor<double>>, 3> all{scalar_loss(1), scalar_loss(1), scalar_loss(1)};
  CHECK(total_loss(scalar_loss(1), all, spec).item() == doctest::Approx(1.8));
  std::array<std::optional<Tensor<double>>, 3> no2{scalar_loss(1), std::nullopt, scalar_loss(1)};
  CHECK_THROWS_AS(total_loss(scalar_loss(1), no2, spec), std::invalid_argument);
}

TEST_CASE("loss spec validation") {
  LossSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.stage_weights = {0.2, -0.1, 0.5, 1.0};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.stage_weights = {0.2, 0.3, 0.5, 2.0};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

// ---- optimizer

TEST_CASE("one sgd step on a single parameter") {
  ParamStore<double> store;
  auto p = store.add("w", Shape{1, 1, 1, 1}, ParamKind::bias);
  p.data_mut()[0] = 1.0;
  p.grad_mut()[0] = 1.0;
  OptimState st;
  st.base_lr = 0.1;
  st.max_iter = 10;
  sgd_step(store, st);
  CHECK(store.entries()[0].momentum[0] == 1.0);
  CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_FALSE(p.has_grad());

  // Second step: momentum carries over, lr follows the poly schedule.
  p.grad_mut()[0] = 0.5;
  st.current_iter = 5;
  sgd_step(store, st);
  const double lr = 0.1 * std::pow(0.5, 0.9);
  CHECK(store.entries()[0].momentum[0] == doctest::Approx(1.4));
  CHECK(p.data()[0] == doctest::Approx(0.9 - lr * 1.4));
}

TEST_CASE("zero gradient and zero learning rate leave parameters alone") {
  for (int variant = 0; variant < 2; ++variant) {
    ParamStore<double> store;
    auto w = store.add("w", Shape{2, 1, 1, 1}, ParamKind::weight);
    w.data_mut()[0] = 0.5;
    w.data_mut()[1] = -2.0;
    OptimState st;
    st.max_iter = 4;
    if (variant == 0) {
      st.weight_decay = 0.0;
      w.grad_mut();
    } else {
      st.base_lr = 0.0;
      w.grad_mut()[0] = 3.0;
    }
    const auto before = w.values();
    sgd_step(store, st);
    CHECK(w.values() == before);
  }
}

TEST_CASE("weight decay touches weight and gate kinds only") {
  ParamStore<double> store;
  const ParamKind kinds[] = {ParamKind::weight, ParamKind::gate, ParamKind::bias, ParamKind::norm,
                             ParamKind::buffer};
  for (int i = 0; i < 5; ++i) {
    auto t = store.add("p" + std::to_string(i), Shape{1, 1, 1, 1}, kinds[i]);
    t.data_mut()[0] = 2.0;
    if (kinds[i] != ParamKind::buffer) t.grad_mut();
  }
  OptimState st;
  st.base_lr = 0.5;
  st.weight_decay = 0.1;
  sgd_step(store, st);
  CHECK(store.get("p0").data()[0] == doctest::Approx(2.0 - 0.5 * 0.2));
  CHECK(store.get("p1").data()[0] == doctest::Approx(2.0 - 0.5 * 0.2));
  CHECK(store.get("p2").data()[0] == 2.0);
  CHECK(store.get("p3").data()[0] == 2.0);
  CHECK(store.get("p4").data()[0] == 2.0);
}

TEST_CASE("sgd step needs a gradient for every trainable entry") {
  ParamStore<double> store;
  store.add("a", Shape{1, 1, 1, 1}, ParamKind::weight).grad_mut();
  store.add("b", Shape{1, 1, 1, 1}, ParamKind::weight);
  store.add("stats", Shape{1, 1, 1, 1}, ParamKind::buffer);
  OptimState st;
  CHECK_THROWS_AS(sgd_step(store, st), TapeError);
  // Nothing moved on failure.
  CHECK(store.entries()[0].momentum[0] == 0.0);
}

TEST_CASE("sgd is deterministic") {
  auto run = [] {
    ParamStore<float> store;
    auto w = store.add("w", Shape{3, 2, 3, 3}, ParamKind::weight);
    auto g = random_tensor<float>(w.shape(), 31, "g");
    auto v = random_tensor<float>(w.shape(), 32, "v");
    std::copy(v.values().begin(), v.values().end(), w.data_mut().begin());
    OptimState st;
    st.max_iter = 3;
    for (int it = 0; it < 3; ++it) {
      st.current_iter = it;
      std::copy(g.values().begin(), g.values().end(), w.grad_mut().begin());
      sgd_step(store, st);
    }
    return w.values();
  };
  CHECK(run() == run());
}

TEST_CASE("poly learning rate") {
  OptimState st;
  st.base_lr = 0.01;
  st.max_iter = 100;
  CHECK(poly_lr(st) == 0.01);
  st.current_iter = 50;
  CHECK(poly_lr(st) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-15));
  st.current_iter = 100;
  CHECK(poly_lr(st) == 0.0);
  double prev = INFINITY;
  for (int i = 0; i <= 100; ++i) {
    st.current_iter = i;
    CHECK(poly_lr(st) <= prev);
    prev = poly_lr(st);
  }
  st.current_iter = 101;
  CHECK_THROWS_AS(poly_lr(st), std::invalid_argument);
  st.current_iter = -1;
  CHECK_THROWS_AS(poly_lr(st), std::invalid_argument);
  st.current_iter = 0;
  st.max_iter = 0;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  st.max_iter = 1;
  st.base_lr = -1;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
  st.base_lr = 0.01;
  st.weight_decay = -1;
  CHECK_THROWS_AS(st.validate(), std::invalid_argument);
}

// ---- metrics

TEST_CASE("mIoU worked example") {
  // Class 0: TP 1, FN 1 -> 0.5. Class 1: FP 1 -> 0.
  auto r0 = miou(labels_of(1, 1, 2, {0, 1}), labels_of(1, 1, 2, {0, 0}), 2, 255);
  CHECK(*r0.per_class[0] == 0.5);
  CHECK(*r0.per_class[1] == 0.0);
  CHECK(r0.mean == 0.25);

  // Each class: TP 1, FP 1, FN 1.
  std::vector<std::int32_t> gt{0, 0, 1, 1};
  std::vector<std::int32_t> pred{0, 1, 0, 1};
  auto r = miou(labels_of(1, 2, 2, pred), labels_of(1, 2, 2, gt), 2, 255);
  CHECK(*r.per_class[0] == doctest::Approx(1.0 / 3));
  CHECK(*r.per_class[1] == doctest::Approx(1.0 / 3));
  CHECK(r.mean == doctest::Approx(1.0 / 3));

  std::vector<std::int32_t> gt2{0, 1, 2, 3};
  std::vector<std::int32_t> pred2{0, 0, 0, 0};
  auto r2 = miou(labels_of(1, 2, 2, pred2), labels_of(1, 2, 2, gt2), 4, 255);
  CHECK(*r2.per_class[0] == doctest::Approx(0.25));
  CHECK(*r2.per_class[3] == 0.0);
  CHECK(r2.mean == doctest::Approx(0.0625));
}

TEST_CASE("perfect prediction gives mIoU 1") {
  auto gt = labels_of(1, 2, 3, {0, 1, 2, 2, 1, 0});
  CHECK(miou(gt, gt, 3, 255).mean == 1.0);
  CHECK(pixel_accuracy(gt, gt, 255) == 1.0);
}

TEST_CASE("classes absent from prediction and ground truth are excluded") {
  auto gt = labels_of(1, 1, 4, {0, 0, 2, 2});
  auto r = miou(gt, gt, 4, 255);
  CHECK(r.per_class[0].has_value());
  CHECK_FALSE(r.per_class[1].has_value());
  CHECK_FALSE(r.per_class[3].has_value());
  CHECK(r.mean == 1.0);
}

TEST_CASE("mIoU agrees with a brute-force oracle") {
  auto rng = SplitMix64::stream(41, "miou");
  for (int trial = 0; trial < 10000; ++trial) {
    const int classes = rng.uniform_int(1, 5);
    const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
    LabelMap gt(1, h, w), pred(1, h, w);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt.values[i] = rng.uniform() < 0.1 ? 255 : rng.uniform_int(0, classes - 1);
      pred.values[i] = rng.uniform_int(0, classes - 1);
    }
    const auto expect = iou_oracle(pred.values, gt.values, classes, 255);
    double sum = 0;
    int defined = 0;
    for (const auto& v : expect) {
      if (v) {
        sum += *v;
        ++defined;
      }
    }
    bool any = false;
    for (auto v : gt.values) any |= v != 255;
    if (!any) continue;
    const auto r = miou(pred, gt, classes, 255);
    REQUIRE(r.per_class.size() == expect.size());
    for (int c = 0; c < classes; ++c) {
      REQUIRE(r.per_class[c].has_value() == expect[c].has_value());
      if (expect[c]) REQUIRE(std::abs(*r.per_class[c] - *expect[c]) < 1e-12);
    }
    REQUIRE(std::abs(r.mean - (defined ? sum / defined : 0.0)) < 1e-12);
  }
}

TEST_CASE("pixel accuracy") {
  auto gt = labels_of(1, 2, 2, {0, 1, 1, 0});
  CHECK(pixel_accuracy(gt, gt, 255) == 1.0);
  CHECK(pixel_accuracy(labels_of(1, 2, 2, {1, 0, 0, 1}), gt, 255) == 0.0);
  CHECK(pixel_accuracy(labels_of(1, 2, 2, {0, 1, 1, 1}), gt, 255) == 0.75);
  // Ignored pixels count for neither side.
  auto gt_ign = labels_of(1, 2, 2, {0, 255, 1, 0});
  CHECK(pixel_accuracy(labels_of(1, 2, 2, {0, 0, 1, 1}), gt_ign, 255) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(pixel_accuracy(gt, LabelMap(1, 2, 2, 255), 255), std::invalid_argument);
}

TEST_CASE("confusion matrix accumulation and errors") {
  ConfusionMatrix cm(3, 255);
  cm.add(labels_of(1, 1, 3, {0, 2, 1}), labels_of(1, 1, 3, {0, 1, 255}));
  cm.add(std::vector<std::int32_t>{2}, std::vector<std::int32_t>{2});
  CHECK(cm.total() == 3);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 2) == 1);
  CHECK(cm.at(2, 2) == 1);
  CHECK_THROWS_AS(cm.add(LabelMap(1, 1, 2), LabelMap(1, 1, 3)), ShapeError);
  CHECK_THROWS_AS(cm.add(std::vector<std::int32_t>{3}, std::vector<std::int32_t>{0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(cm.add(std::vector<std::int32_t>{0}, std::vector<std::int32_t>{7}),
                  std::invalid_argument);
  ConfusionMatrix empty(2, 255);
  CHECK(empty.miou() == 0.0);
  CHECK_THROWS_AS(empty.pixel_accuracy(), std::invalid_argument);
}

// ---- synthetic data

TEST_CASE("synthetic scenes are a pure function of spec and index") {
  SynthSpec spec;
  auto a = synth_generate<float>(spec, 7);
  auto b = synth_generate<float>(spec, 7);
  auto c = synth_generate<float>(spec, 8);
  CHECK(gsto::testing::bit_equal(a.image, b.image));
  CHECK(a.labels == b.labels);
  CHECK_FALSE(a.labels == c.labels);
  CHECK(a.image.shape() == Shape{1, 3, 64, 64});
  SynthSpec other = spec;
  other.seed = 2;
  CHECK_FALSE(synth_generate<float>(other, 7).labels == a.labels);
}

TEST_CASE("zero object counts give pure background") {
  SynthSpec spec;
  spec.counts = {SynthSpec::Range{0, 0}, SynthSpec::Range{0, 0}, SynthSpec::Range{0, 0}};
  spec.noise = 0.0;
  auto s = synth_generate<double>(spec, 3);
  for (auto v : s.labels.values) REQUIRE(v == 0);
  for (int ch = 0; ch < 3; ++ch) CHECK(s.image.at(0, ch, 10, 10) == class_colors()[0][ch]);
}

TEST_CASE("every class appears and pixel share follows object size") {
  SynthSpec spec;
  std::array<long, 4> hist{};
  std::array<int, 4> images_with{};
  for (int i = 0; i < 100; ++i) {
    auto s = synth_generate<float>(spec, i);
    std::array<bool, 4> seen{};
    for (auto v : s.labels.values) {
      REQUIRE(v >= 0);
      REQUIRE(v < 4);
      ++hist[v];
      seen[v] = true;
    }
    for (int c = 0; c < 4; ++c) images_with[c] += seen[c];
  }
  for (int c = 0; c < 4; ++c) CHECK(hist[c] > 0);
  CHECK(hist[3] < hist[2]);
  CHECK(hist[2] < hist[1]);
  CHECK(images_with[1] == 100);
}

TEST_CASE("noise-free pixels carry their class colour") {
  SynthSpec spec;
  spec.noise = 0.0;
  auto s = synth_generate<double>(spec, 5);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int cls = s.labels.at(0, y, x);
      for (int ch = 0; ch < 3; ++ch) REQUIRE(s.image.at(0, ch, y, x) == class_colors()[cls][ch]);
    }
  }
}

TEST_CASE("side ranges and spec validation") {
  SynthSpec spec;
  CHECK(spec.side_range(1) == SynthSpec::Range{32, 48});
  CHECK(spec.side_range(2) == SynthSpec::Range{8, 16});
  CHECK(spec.side_range(3) == SynthSpec::Range{2, 6});
  CHECK_THROWS_AS(spec.side_range(0), std::invalid_argument);
  auto bad = spec;
  bad.height = 8;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.counts[1] = {3, 1};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.disk_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.noise = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("make_batch stacks and mirrors") {
  SynthSpec spec;
  spec.height = spec.width = 16;
  std::vector<Sample<double>> xs{synth_generate<double>(spec, 0), synth_generate<double>(spec, 1)};
  auto b = make_batch(xs, {false, true});
  CHECK(b.image.shape() == Shape{2, 3, 16, 16});
  CHECK(b.labels.n == 2);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      REQUIRE(b.labels.at(0, y, x) == xs[0].labels.at(0, y, x));
      REQUIRE(b.labels.at(1, y, x) == xs[1].labels.at(0, y, 15 - x));
      for (int c = 0; c < 3; ++c) {
        REQUIRE(b.image.at(0, c, y, x) == xs[0].image.at(0, c, y, x));
        REQUIRE(b.image.at(1, c, y, x) == xs[1].image.at(0, c, y, 15 - x));
      }
    }
  }
  CHECK_THROWS_AS(make_batch(xs, {true}), std::invalid_argument);
  CHECK_THROWS_AS(make_batch(std::vector<Sample<double>>{}), std::invalid_argument);
  spec.height = 20;
  xs.push_back(synth_generate<double>(spec, 2));
  CHECK_THROWS_AS(make_batch(xs), ShapeError);
}
