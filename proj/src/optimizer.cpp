#include "ie2d/optimizer.hpp"

#include <cmath>

#include "ie2d/errors.hpp"

namespace ie2d {

template <typename T>
ScopedOptimizer<T>::ScopedOptimizer(const ParameterStore<T>& params, LossSpec spec)
    : spec_(std::move(spec)) {
  m_.resize(params.size());
  v_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entries()[i];
    if (!spec_.updates(e.scope)) continue;
    m_[i].assign(e.count(), T(0));
    v_[i].assign(e.count(), T(0));
  }
}

template <typename T>
void ScopedOptimizer<T>::step(ParameterStore<T>& params, const ParameterStore<T>& grads,
                              const OptimizerConfig& config) {
  if (!params.same_layout(grads) || m_.size() != params.size())
    throw DimensionError("optimizer: parameter/gradient layout mismatch");
  ++steps_;
  const double lr = config.learning_rate;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.entries()[i];
    if (!spec_.updates(p.scope)) continue;
    const auto& g = grads.entries()[i].values;
    if (config.kind == OptimizerKind::Sgd) {
      for (std::size_t k = 0; k < g.size(); ++k) p.values[k] -= static_cast<T>(lr * g[k]);
      continue;
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.values[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + config.epsilon));
    }
  }
}

template class ScopedOptimizer<float>;
template class ScopedOptimizer<double>;

}  // namespace ie2d
