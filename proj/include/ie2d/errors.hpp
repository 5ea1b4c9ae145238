#pragma once

#include <stdexcept>
#include <string>

namespace ie2d {

// Invalid configuration or unusable run parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or map shapes that do not fit the model configuration.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems reading user data (missing files, unreadable PNGs, ambiguous masks).
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training sub-step produced a non-finite loss or gradient.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(std::string loss, const std::string& what)
      : std::runtime_error(what), loss_(std::move(loss)) {}
  const std::string& loss() const noexcept { return loss_; }

 private:
  std::string loss_;
};

// Checkpoint contents disagree with the layout its config implies.
class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ie2d
