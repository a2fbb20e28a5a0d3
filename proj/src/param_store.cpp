#include "gsto/param_store.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include "gsto/tensor_io.hpp"

namespace gsto {

template <typename T>
Tensor<T> ParamStore<T>::add(std::string name, Shape shape, ParamKind kind) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor<T> value = Tensor<T>::zeros(shape, kind != ParamKind::buffer);
  ParamEntry<T> entry{name, value, {}, kind};
  if (entry.trainable()) entry.momentum.assign(shape.numel(), T(0));
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(entry));
  return value;
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
Tensor<T> ParamStore<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return entries_[it->second].value;
}

template <typename T>
std::size_t ParamStore<T>::total_param_count() const {
  return param_count_if([](const ParamEntry<T>&) { return true; });
}

template <typename T>
std::size_t ParamStore<T>::param_count_if(
    const std::function<bool(const ParamEntry<T>&)>& pred) const {
  std::size_t total = 0;
  for (const auto& e : entries_) {
    if (e.trainable() && pred(e)) total += e.value.numel();
  }
  return total;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

template <typename T>
void ParamStore<T>::save(std::ostream& os) const {
  for (const auto& e : entries_) {
    const auto len = static_cast<std::uint32_t>(e.name.size());
    const std::array<char, 4> b{static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                                static_cast<char>((len >> 16) & 0xff),
                                static_cast<char>((len >> 24) & 0xff)};
    os.write(b.data(), 4);
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_tensor(os, e.value);
  }
  if (!os) throw FormatError("checkpoint write failed");
}

template <typename T>
void ParamStore<T>::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  save(os);
}

template <typename T>
void ParamStore<T>::load(std::istream& is) {
  for (auto& e : entries_) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) {
      throw FormatError("checkpoint ended before entry " + e.name);
    }
    const std::uint32_t len = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                              (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    if (len > (1u << 16)) throw FormatError("implausible name length in checkpoint");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated checkpoint name");
    if (name != e.name) throw FormatError("checkpoint entry '" + name + "' where '" + e.name + "' expected");
    Tensor<T> t = read_tensor<T>(is);
    if (t.shape() != e.value.shape()) {
      throw FormatError("shape mismatch for " + name + ": " + t.shape().str() + " vs " +
                        e.value.shape().str());
    }
    auto dst = e.value.data_mut();
    std::copy(t.data().begin(), t.data().end(), dst.begin());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing data in checkpoint");
}

template <typename T>
void ParamStore<T>::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  load(is);
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace gsto
