// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rnnlab {

namespace {

void check_congruent(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i])) {
      throw ShapeError("optimizer: parameter " + std::to_string(i) + " is " +
                       params[i]->shape_string() + ", gradient is " + grads[i]->shape_string());
    }
  }
}

void init_like(std::vector<Matrix>& slots, std::span<Matrix* const> params) {
  if (!slots.empty()) return;
  slots.reserve(params.size());
  for (const Matrix* p : params) slots.emplace_back(p->rows(), p->cols());
}

}  // namespace

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::RMSProp ? "rmsprop" : "adam";
}

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) {
  if (name == "rmsprop") return OptimizerKind::RMSProp;
  if (name == "adam") return OptimizerKind::Adam;
  return std::nullopt;
}

void rmsprop_update(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                    RmsPropState& state, double learning_rate, double decay_rate) {
  check_congruent(params, grads);
  init_like(state.mean_square, params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* theta = params[k]->data();
    const double* g = grads[k]->data();
    double* acc = state.mean_square[k].data();
    for (std::size_t i = 0, n = params[k]->size(); i < n; ++i) {
      acc[i] = decay_rate * acc[i] + (1.0 - decay_rate) * g[i] * g[i];
      theta[i] -= learning_rate * g[i] / (std::sqrt(acc[i]) + kOptimizerEpsilon);
    }
  }
}

void adam_update(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                 AdamState& state, double learning_rate) {
  check_congruent(params, grads);
  init_like(state.m, params);
  init_like(state.v, params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* theta = params[k]->data();
    const double* g = grads[k]->data();
    double* m = state.m[k].data();
    double* v = state.v[k].data();
    for (std::size_t i = 0, n = params[k]->size(); i < n; ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + kOptimizerEpsilon);
    }
  }
}

double global_norm(std::span<const Matrix* const> grads) {
  double s = 0.0;
  for (const Matrix* g : grads)
    for (double v : g->flat()) s += v * v;
  return std::sqrt(s);
}

double clip_global_norm(std::span<Matrix* const> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: threshold must be positive");
  std::vector<const Matrix*> view(grads.begin(), grads.end());
  const double norm = global_norm(view);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (Matrix* g : grads)
      for (double& v : g->flat()) v *= k;
  }
  return norm;
}

std::vector<Matrix*> parameter_list(SequenceModel& model) {
  std::vector<Matrix*> out;
  model.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> parameter_list(const SequenceModel& model) {
  std::vector<const Matrix*> out;
  model.for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double decay_rate)
    : kind_(kind), learning_rate_(learning_rate), decay_rate_(decay_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(decay_rate > 0.0 && decay_rate < 1.0)) {
    throw std::invalid_argument("decay rate must lie in (0, 1)");
  }
}

void Optimizer::step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (kind_ == OptimizerKind::RMSProp) {
    rmsprop_update(params, grads, rms_, learning_rate_, decay_rate_);
  } else {
    adam_update(params, grads, adam_, learning_rate_);
  }
}

void Optimizer::step(SequenceModel& model, const GradientSet& grads) {
  const auto p = parameter_list(model);
  const auto g = parameter_list(grads);
  step(p, g);
}

}  // namespace rnnlab
