#include "gsto/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gsto {
namespace {

template <typename T>
T central_difference(const std::function<T(const Tensor<T>&)>& f, Tensor<T>& x, std::size_t i,
                     T eps) {
  auto data = x.data_mut();
  const T original = data[i];
  data[i] = original + eps;
  const T plus = f(x);
  data[i] = original - eps;
  const T minus = f(x);
  data[i] = original;
  if (!std::isfinite(plus) || !std::isfinite(minus)) {
    throw NumericError("non-finite function value at element " + std::to_string(i));
  }
  return (plus - minus) / (T(2) * eps);
}

}  // namespace

template <typename T>
RiddersEstimate finite_diff_ridders(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                                    std::size_t index, double h0) {
  if (!(h0 > 0.0)) throw std::invalid_argument("finite_diff_ridders requires h0 > 0");
  if (index >= x.numel()) throw std::out_of_range("finite difference index out of range");
  constexpr int kTab = 10;
  constexpr double kCon = 1.4;
  constexpr double kCon2 = kCon * kCon;
  constexpr double kSafe = 2.0;
  double a[kTab][kTab];
  double h = h0;
  RiddersEstimate best{0.0, INFINITY};
  a[0][0] = static_cast<double>(central_difference(f, x, index, static_cast<T>(h)));
  for (int i = 1; i < kTab; ++i) {
    h /= kCon;
    a[0][i] = static_cast<double>(central_difference(f, x, index, static_cast<T>(h)));
    double fac = kCon2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double err = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (err <= best.error) best = {a[j][i], err};
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * best.error) break;
  }
  return best;
}

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("finite_diff_grad requires eps > 0");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < x.numel(); ++i) dst[i] = central_difference(f, x, i, eps);
  return out;
}

template <typename T>
Tensor<T> finite_diff_grad_at(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                              const std::vector<std::size_t>& indices, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("finite_diff_grad requires eps > 0");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto dst = out.data_mut();
  for (std::size_t i : indices) {
    if (i >= x.numel()) throw std::out_of_range("finite difference index out of range");
    dst[i] = central_difference(f, x, i, eps);
  }
  return out;
}

template <typename T>
GradReport grad_check(const std::vector<T>& analytic, const std::vector<T>& numeric, double tol,
                      const std::vector<std::size_t>& indices) {
  if (analytic.size() != numeric.size()) throw ShapeError("grad_check size mismatch");
  GradReport report;
  auto visit = [&](std::size_t i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double err = std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
    ++report.checked;
    report.max_error = std::max(report.max_error, std::isnan(err) ? INFINITY : err);
    report.worst.push_back({i, a, n, err});
    std::sort(report.worst.begin(), report.worst.end(),
              [](const GradMismatch& l, const GradMismatch& r) { return l.error > r.error; });
    if (report.worst.size() > 5) report.worst.pop_back();
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < analytic.size(); ++i) visit(i);
  } else {
    for (std::size_t i : indices) visit(i);
  }
  report.passed = report.max_error < tol;
  return report;
}

std::string GradReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  os << (passed ? "pass" : "FAIL") << " max_rel_err=" << std::scientific << max_error
     << " checked=" << checked;
  if (!passed) {
    for (const auto& m : worst) {
      os << " [" << m.index << ": a=" << m.analytic << " n=" << m.numeric << "]";
    }
  }
  return os.str();
}

#define GSTO_INSTANTIATE(T)                                                                  \
  template Tensor<T> finite_diff_grad<T>(const std::function<T(const Tensor<T>&)>&, Tensor<T>, \
                                         T);                                                 \
  template Tensor<T> finite_diff_grad_at<T>(const std::function<T(const Tensor<T>&)>&,       \
                                            Tensor<T>, const std::vector<std::size_t>&, T);  \
  template RiddersEstimate finite_diff_ridders<T>(const std::function<T(const Tensor<T>&)>&, \
                                                  Tensor<T>, std::size_t, double);            \
  template GradReport grad_check<T>(const std::vector<T>&, const std::vector<T>&, double,    \
                                    const std::vector<std::size_t>&);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto
