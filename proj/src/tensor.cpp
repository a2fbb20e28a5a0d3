#include "gsto/tensor.hpp"

#include <atomic>
#include <sstream>
#include <utility>

namespace gsto {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  if (!shape.valid()) throw ShapeError("all extents must be >= 1, got " + shape.str());
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data.assign(shape.numel(), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (!shape.valid()) throw ShapeError("all extents must be >= 1, got " + shape.str());
  if (values.size() != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape{1, 1, 1, 1}, value, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (shape() != Shape{1, 1, 1, 1}) throw ShapeError("item() on non-scalar " + shape().str());
  return node().data[0];
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node().grad.empty()) return std::vector<T>(numel(), T(0));
  return node().grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node().grad.clear();
  node().grad_owner = 0;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto copy = std::make_shared<Node>();
  copy->shape = node().shape;
  copy->data = node().data;
  copy->requires_grad = node().requires_grad;
  return Tensor(std::move(copy));
}

// ---------------------------------------------------------------------------

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

struct FaultInjection {
  std::string name;
  double factor = 1.5;
};

FaultInjection& fault() {
  thread_local FaultInjection f;
  return f;
}

}  // namespace

void set_backward_fault(std::string name, double factor) {
  fault().name = std::move(name);
  fault().factor = factor;
}
const std::string& backward_fault_name() { return fault().name; }
double backward_fault_factor() { return fault().factor; }

template <typename T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_slot<T>();
}

template <typename T>
void Tape<T>::record(std::string_view name, std::vector<NodePtr> inputs, const NodePtr& output,
                     BackwardFn fn) {
  if (consumed_) throw TapeError("recording onto a consumed tape; call reset() first");
  output->tape_id = id_;
  output->requires_grad = true;
  ops_.push_back(Op{std::string(name), std::move(inputs), output, std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw TapeError("backward on undefined tensor");
  if (loss.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward requires a (1,1,1,1) loss, got " + loss.shape().str());
  }
  if (consumed_) throw TapeError("backward already ran on this tape; call reset() first");
  const auto& root = loss.ptr();
  if (root->tape_id != id_) throw TapeError("loss was not produced on this tape");

  std::size_t last = ops_.size();
  while (last > 0 && ops_[last - 1].output != root) --last;
  if (last == 0) throw TapeError("loss was not produced on this tape");

  // Leaves carrying gradient from a different tape must be reset explicitly.
  for (std::size_t i = 0; i < last; ++i) {
    for (const auto& in : ops_[i].inputs) {
      if (in->tape_id == 0 && in->grad_owner != 0 && in->grad_owner != id_) {
        throw TapeError("leaf holds a gradient from an earlier backward; zero_grad() first");
      }
    }
  }

  root->grad.assign(1, T(1));
  const std::string& fault_name = fault().name;
  for (std::size_t i = last; i-- > 0;) {
    Op& op = ops_[i];
    if (op.output->grad.empty()) continue;
    for (const auto& in : op.inputs) {
      if (in->requires_grad) {
        in->ensure_grad();
        in->grad_owner = id_;
      }
    }
    if (!fault_name.empty() && op.name == fault_name) {
      const T factor = static_cast<T>(fault().factor);
      std::vector<T> saved = op.output->grad;
      for (T& g : op.output->grad) g *= factor;
      op.fn();
      op.output->grad = std::move(saved);
    } else {
      op.fn();
    }
  }
  // Unreachable inputs still expose a zero gradient.
  for (std::size_t i = 0; i < last; ++i) {
    for (const auto& in : ops_[i].inputs) {
      if (in->requires_grad) {
        in->ensure_grad();
        in->grad_owner = id_;
      }
    }
  }
  consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
  ops_.clear();
  consumed_ = false;
  id_ = next_tape_id.fetch_add(1);
}

template <typename T>
std::vector<std::string> Tape<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(ops_.size());
  for (const auto& op : ops_) names.push_back(op.name);
  return names;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(active_slot<T>()) {
  active_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_slot<T>() = previous_;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) throw TapeError("backward without an active tape");
  tape->backward(loss);
}

namespace detail {

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
Tape<T>* recording_tape(const std::vector<Tensor<T>>& inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
Tensor<T> make_output(Shape shape, Tape<T>* tape) {
  Tensor<T> out = Tensor<T>::zeros(shape);
  if (tape != nullptr) out.set_requires_grad(true);
  return out;
}

}  // namespace detail

#define GSTO_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                              \
  template class Tape<T>;                                                                \
  template class TapeScope<T>;                                                           \
  template void backward<T>(const Tensor<T>&);                                           \
  template Tape<T>* detail::recording_tape<T>(std::initializer_list<const Tensor<T>*>); \
  template Tape<T>* detail::recording_tape<T>(const std::vector<Tensor<T>>&);            \
  template Tensor<T> detail::make_output<T>(Shape, Tape<T>*);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto
