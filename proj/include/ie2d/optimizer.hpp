#pragma once

#include <cstdint>
#include <vector>

#include "ie2d/losses.hpp"
#include "ie2d/parameter_store.hpp"

namespace ie2d {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Update rule bound to one loss. It owns moment buffers for the parameters in
// that loss's scopes and never writes to any other parameter, so a parameter
// shared by two losses (the CAE decoder) keeps separate moments per loss.
template <typename T>
class ScopedOptimizer {
 public:
  ScopedOptimizer() = default;
  ScopedOptimizer(const ParameterStore<T>& params, LossSpec spec);

  const LossSpec& spec() const { return spec_; }
  std::int64_t steps() const { return steps_; }

  void step(ParameterStore<T>& params, const ParameterStore<T>& grads,
            const OptimizerConfig& config);

  // Moment buffers indexed like params.entries(); empty for out-of-scope entries.
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  LossSpec spec_{LossName::UnetOut, {}};
  std::int64_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class ScopedOptimizer<float>;
extern template class ScopedOptimizer<double>;

}  // namespace ie2d
