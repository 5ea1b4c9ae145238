#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ie2d {

// Ownership scope of a parameter. Every parameter belongs to exactly one.
enum class Scope { Unet, CaeEncoder, CaeDecoder, ImitatingEncoder };

inline constexpr Scope kAllScopes[] = {Scope::Unet, Scope::CaeEncoder, Scope::CaeDecoder,
                                       Scope::ImitatingEncoder};

std::string_view scope_name(Scope scope);  // "UNET", "CAE_ENCODER", ...
Scope parse_scope(std::string_view name);  // throws std::invalid_argument

template <typename T>
struct ParameterEntry {
  std::string name;
  Scope scope;
  std::vector<int> shape;
  std::vector<T> values;

  std::size_t count() const { return values.size(); }
};

// Named, shaped weights in insertion order. The set of names, scopes and shapes
// is fixed once the store is built; training only rewrites values.
template <typename T>
class ParameterStore {
 public:
  using Entry = ParameterEntry<T>;

  // Adds a zero-filled parameter. Names must be unique.
  Entry& add(std::string name, Scope scope, std::vector<int> shape);

  bool contains(std::string_view name) const;
  Entry& at(std::string_view name);
  const Entry& at(std::string_view name) const;
  std::span<T> values(std::string_view name) { return at(name).values; }
  std::span<const T> values(std::string_view name) const { return at(name).values; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_count() const;
  std::size_t scope_count(Scope scope) const;

  // Same names, scopes and shapes in the same order.
  bool same_layout(const ParameterStore& other) const;
  ParameterStore zeros_like() const;
  void fill(T value);

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) {
      auto& o = out.add(e.name, e.scope, e.shape);
      for (std::size_t i = 0; i < e.values.size(); ++i) o.values[i] = static_cast<U>(e.values[i]);
    }
    return out;
  }

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
bool operator==(const ParameterEntry<T>& a, const ParameterEntry<T>& b) {
  return a.name == b.name && a.scope == b.scope && a.shape == b.shape && a.values == b.values;
}

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace ie2d
