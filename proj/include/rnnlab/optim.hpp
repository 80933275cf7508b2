// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rnnlab/bptt.hpp"
#include "rnnlab/matrix.hpp"

namespace rnnlab {

enum class OptimizerKind { RMSProp, Adam };

std::string_view optimizer_name(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name);

inline constexpr double kOptimizerEpsilon = 1e-8;
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;

struct RmsPropState {
  std::vector<Matrix> mean_square;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

/// acc <- decay*acc + (1-decay)*g^2;  theta <- theta - lr*g / (sqrt(acc) + eps)
void rmsprop_update(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                    RmsPropState& state, double learning_rate, double decay_rate);

/// Bias-corrected Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
void adam_update(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                 AdamState& state, double learning_rate);

/// Rescales `grads` so their joint Frobenius norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Matrix* const> grads, double max_norm);
double global_norm(std::span<const Matrix* const> grads);

std::vector<Matrix*> parameter_list(SequenceModel& model);
std::vector<const Matrix*> parameter_list(const SequenceModel& model);

/// Holds the accumulators for one of the two update rules.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double decay_rate = 0.9);

  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads);
  void step(SequenceModel& model, const GradientSet& grads);

  OptimizerKind kind() const noexcept { return kind_; }
  const RmsPropState& rmsprop_state() const noexcept { return rms_; }
  const AdamState& adam_state() const noexcept { return adam_; }

 private:
  OptimizerKind kind_;
  double learning_rate_;
  double decay_rate_;
  RmsPropState rms_;
  AdamState adam_;
};

}  // namespace rnnlab
