// SPDX-License-Identifier: Apache-2.0
//
// Stacked recurrent model with a softmax read-out at every step, full
// (untruncated) backpropagation through time, a central-difference gradient
// oracle, and an exact Jacobian-norm probe across time offsets.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rnnlab/cells.hpp"
#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

struct TaskBatch;

struct ModelSpec {
  CellKind kind = CellKind::SGRU;
  bool tfc = false;
  std::size_t input_size = 1;
  std::size_t hidden_size = 1;
  std::size_t num_classes = 1;
  std::size_t layers = 1;
};

/// Recurrent layers plus an output projection applied to the top layer.
/// Gradients use the same type, so every parameter has a congruent slot.
struct SequenceModel {
  std::vector<CellParams> layers;
  Matrix w_out;  // num_classes x d_h
  Matrix b_out;  // 1 x num_classes

  std::size_t input_size() const { return layers.front().input_size; }
  std::size_t hidden_size() const { return layers.front().hidden_size; }
  std::size_t num_classes() const { return w_out.rows(); }
  CellKind kind() const { return layers.front().kind; }
  bool tfc() const { return layers.front().tfc(); }

  SequenceModel zeros_like() const;
  std::size_t parameter_count() const;

  /// Visits ("layer0.W_r", matrix) ... ("W_out", matrix), ("b_out", matrix).
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      layers[l].for_each([&](const std::string& name, Matrix& m) { fn(prefix + name, m); });
    }
    fn(std::string("W_out"), w_out);
    fn(std::string("b_out"), b_out);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<SequenceModel*>(this)->for_each(
        [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
  }
};

using GradientSet = SequenceModel;

SequenceModel make_model(const ModelSpec& spec, Rng& rng);

/// Per-step targets, time-major: targets[t][row]. Negative entries are
/// ignored by the loss.
using TargetGrid = std::vector<std::vector<int>>;

struct SequenceForward {
  std::vector<Matrix> probs;                    // per step, batch x num_classes
  std::vector<std::vector<StepCache>> caches;   // [layer][t]
  std::vector<Matrix> top_hidden;               // per step, batch x d_h
};

SequenceForward forward_sequence(const SequenceModel& model, std::span<const Matrix> inputs);

/// Back-propagates per-step logit gradients (empty entries mean zero),
/// accumulating into `grads`. Returns dL/dx for every input step.
std::vector<Matrix> backward_sequence(const SequenceModel& model, const SequenceForward& fwd,
                                      std::span<const Matrix> grad_logits, GradientSet& grads);

struct LossAndGradients {
  double loss = 0.0;
  GradientSet grads;
  std::vector<Matrix> grad_inputs;
  std::size_t counted = 0;  // number of (row, step) positions in the mean
};

/// Mean cross-entropy over all non-ignored positions and its exact gradient.
LossAndGradients bptt_gradients(const SequenceModel& model, std::span<const Matrix> inputs,
                                const TargetGrid& targets);
LossAndGradients bptt_gradients(const SequenceModel& model, const TaskBatch& batch);

double sequence_loss(const SequenceModel& model, std::span<const Matrix> inputs,
                     const TargetGrid& targets);
double sequence_loss(const SequenceModel& model, const TaskBatch& batch);

/// Central difference (J(theta+eps) - J(theta-eps)) / 2eps for every entry of
/// `theta`. `theta` is perturbed in place and restored.
Matrix central_difference(Matrix& theta, const std::function<double()>& loss, double eps);

GradientSet finite_diff_gradient(const SequenceModel& model,
                                 const std::function<double(const SequenceModel&)>& loss,
                                 double eps = 1e-5);
GradientSet finite_diff_gradient(const SequenceModel& model, const TaskBatch& batch,
                                 double eps = 1e-5);

/// Denominator floor for relative error; keeps near-zero entries from
/// reporting pure cancellation noise as a mismatch.
inline constexpr double kRelativeErrorFloor = 1e-6;

double relative_error(double analytic, double numeric);

struct GradientComparison {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

GradientComparison compare_gradients(const GradientSet& analytic, const GradientSet& numeric);

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckCase {
  CellKind kind = CellKind::SGRU;
  bool tfc = false;
  std::size_t layers = 1;
};

struct GradCheckReport {
  GradCheckCase config;
  GradientComparison comparison;
  bool passed = false;
};

/// Compares BPTT against central differences (eps = 1e-5) on a small random
/// instance: d_x = 3, d_h = 4, T = 6, batch = 2, 5 classes, dense inputs.
/// `inject_bug` perturbs one analytic entry so the harness can be seen failing.
GradCheckReport run_gradient_check(const GradCheckCase& config, std::uint64_t seed,
                                   bool inject_bug = false);

/// ||dh^T / dh^k||_F for k = 1 .. T-1 (entry k-1), computed exactly by
/// back-propagating every unit vector of h^T through a batch-1 trajectory
/// driven by inputs uniform on [-1, 1].
std::vector<double> gradient_probe(const CellParams& cell, std::size_t T, Rng& rng);

}  // namespace rnnlab
