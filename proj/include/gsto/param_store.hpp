#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gsto/tensor.hpp"

namespace gsto {

enum class ParamKind {
  weight,  // conv kernels; Kaiming init, weight decay applies
  gate,    // gate / predictor kernels (rho, omega', theta); weight decay applies
  bias,    // no weight decay
  norm,    // BN gamma/beta; no weight decay
  buffer,  // running statistics; not learnable, not counted
};

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> value;
  std::vector<T> momentum;  // empty for buffers
  ParamKind kind;

  bool trainable() const { return kind != ParamKind::buffer; }
  bool decays() const { return kind == ParamKind::weight || kind == ParamKind::gate; }
};

/// Named learnable parameters and state buffers in insertion order.
template <typename T>
class ParamStore {
 public:
  /// Adds a zero-initialized entry. Names must be unique.
  Tensor<T> add(std::string name, Shape shape, ParamKind kind);

  bool contains(std::string_view name) const;
  Tensor<T> get(std::string_view name) const;
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }
  std::vector<ParamEntry<T>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Element count over learnable entries.
  std::size_t total_param_count() const;
  std::size_t param_count_if(const std::function<bool(const ParamEntry<T>&)>& pred) const;

  void zero_grad();

  /// Checkpoint: repeated (u32 name length, name bytes, GST1 tensor) in insertion order.
  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  /// Loads values into existing entries; names, order and shapes must match exactly.
  void load(std::istream& is);
  void load(const std::string& path);

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace gsto
