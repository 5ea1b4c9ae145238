#include "ie2d/parameter_store.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "ie2d/errors.hpp"

namespace ie2d {

std::string_view scope_name(Scope scope) {
  switch (scope) {
    case Scope::Unet: return "UNET";
    case Scope::CaeEncoder: return "CAE_ENCODER";
    case Scope::CaeDecoder: return "CAE_DECODER";
    case Scope::ImitatingEncoder: return "IMITATING_ENCODER";
  }
  return "?";
}

Scope parse_scope(std::string_view name) {
  for (Scope s : kAllScopes)
    if (scope_name(s) == name) return s;
  throw std::invalid_argument("unknown scope '" + std::string(name) + "'");
}

template <typename T>
typename ParameterStore<T>::Entry& ParameterStore<T>::add(std::string name, Scope scope,
                                                          std::vector<int> shape) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                            std::multiplies<std::size_t>());
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), scope, std::move(shape), std::vector<T>(count, T(0))});
  return entries_.back();
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
typename ParameterStore<T>::Entry& ParameterStore<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw DimensionError("no parameter named '" + std::string(name) + "'");
  return entries_[it->second];
}

template <typename T>
const typename ParameterStore<T>::Entry& ParameterStore<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw DimensionError("no parameter named '" + std::string(name) + "'");
  return entries_[it->second];
}

template <typename T>
std::size_t ParameterStore<T>::total_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.count();
  return n;
}

template <typename T>
std::size_t ParameterStore<T>::scope_count(Scope scope) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.scope == scope) n += e.count();
  return n;
}

template <typename T>
bool ParameterStore<T>::same_layout(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.scope != b.scope || a.shape != b.shape) return false;
  }
  return true;
}

template <typename T>
ParameterStore<T> ParameterStore<T>::zeros_like() const {
  ParameterStore out;
  for (const auto& e : entries_) out.add(e.name, e.scope, e.shape);
  return out;
}

template <typename T>
void ParameterStore<T>::fill(T value) {
  for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), value);
}

template <typename T>
bool ParameterStore<T>::operator==(const ParameterStore& other) const {
  return entries_ == other.entries_;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace ie2d
