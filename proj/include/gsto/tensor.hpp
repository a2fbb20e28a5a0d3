#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gsto {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct TapeError : std::logic_error {
  using std::logic_error::logic_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Extents of a dense NCHW tensor. Width is the fastest-varying axis.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t tape_id = 0;    // tape that produced this node, 0 for leaves
  std::uint64_t grad_owner = 0; // tape whose backward wrote grad, 0 when clean

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

/// Handle to a dense 4-D array. Copies share storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  std::span<T> data_mut() { return node().data; }
  const std::vector<T>& values() const& { return node().data; }
  /// A temporary handle may own the last reference, so hand out a copy.
  std::vector<T> values() && { return node().data; }

  T at(int n, int c, int h, int w) const { return node().data[offset(n, c, h, w)]; }
  T& at(int n, int c, int h, int w) { return node().data[offset(n, c, h, w)]; }
  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = shape();
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }
  /// Value of a (1,1,1,1) tensor.
  T item() const;

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }

  bool has_grad() const { return !node().grad.empty(); }
  /// Gradient values; all zeros when nothing has been accumulated.
  std::vector<T> grad() const;
  std::span<T> grad_mut() {
    node().ensure_grad();
    return node().grad;
  }
  /// Clears the gradient and releases it from the tape that wrote it.
  void zero_grad();

  /// Deep copy of values and the requires_grad flag; no gradient, no history.
  Tensor clone() const;
  /// Leaf sharing nothing with the tape; values copied.
  Tensor detach() const {
    Tensor t = clone();
    t.set_requires_grad(false);
    return t;
  }

  const NodePtr& ptr() const { return node_; }
  Node& node() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return *node_;
  }

 private:
  NodePtr node_;
};

/// Records differentiable operations for reverse-mode replay.
///
/// A tape is consumed by backward(); a second backward() on the same tape
/// throws TapeError until reset() is called. Leaf gradients written by one
/// tape must be cleared (Tensor::zero_grad / ParamStore::zero_grad) before
/// another tape may write them.
template <typename T>
class Tape {
 public:
  using NodePtr = typename Tensor<T>::NodePtr;
  using BackwardFn = std::function<void()>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view name, std::vector<NodePtr> inputs, const NodePtr& output,
              BackwardFn fn);
  void backward(const Tensor<T>& loss);
  void reset();

  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }
  /// Operation names in recording order.
  std::vector<std::string> op_names() const;

  /// Tape receiving records on this thread, or nullptr.
  static Tape* active();

 private:
  template <typename>
  friend class TapeScope;

  struct Op {
    std::string name;
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn fn;
  };
  std::vector<Op> ops_;
  std::uint64_t id_;
  bool consumed_ = false;
};

/// Makes a tape active on the current thread for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Backpropagates from a scalar loss recorded on the active tape.
template <typename T>
void backward(const Tensor<T>& loss);

namespace detail {

/// Active tape when any input requires a gradient, else nullptr.
template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs);
template <typename T>
Tape<T>* recording_tape(const std::vector<Tensor<T>>& inputs);

/// Output tensor marked as part of the given tape's graph.
template <typename T>
Tensor<T> make_output(Shape shape, Tape<T>* tape);

}  // namespace detail

/// Test hook: scale the upstream gradient seen by every op with this name.
/// An empty name disables injection. Thread-local.
void set_backward_fault(std::string name, double factor = 1.5);
const std::string& backward_fault_name();
double backward_fault_factor();

}  // namespace gsto
