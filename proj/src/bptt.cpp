// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/bptt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rnnlab/tasks.hpp"

namespace rnnlab {

SequenceModel SequenceModel::zeros_like() const {
  SequenceModel out = *this;
  out.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

std::size_t SequenceModel::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

SequenceModel make_model(const ModelSpec& spec, Rng& rng) {
  if (spec.layers < 1 || spec.num_classes < 1) {
    throw std::invalid_argument("make_model: layers and num_classes must be >= 1");
  }
  SequenceModel m;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const std::size_t in = l == 0 ? spec.input_size : spec.hidden_size;
    m.layers.push_back(init_params(spec.kind, in, spec.hidden_size, spec.tfc, rng));
  }
  m.w_out = glorot_init(spec.num_classes, spec.hidden_size, rng);
  m.b_out = Matrix(1, spec.num_classes);
  return m;
}

SequenceForward forward_sequence(const SequenceModel& model, std::span<const Matrix> inputs) {
  if (inputs.empty()) throw ShapeError("forward_sequence: empty input sequence");
  const std::size_t batch = inputs.front().rows();
  SequenceForward fwd;
  fwd.caches.resize(model.layers.size());
  std::vector<CellState> states;
  for (const auto& layer : model.layers) {
    states.push_back(CellState::zeros(layer, batch));
  }
  for (auto& c : fwd.caches) c.reserve(inputs.size());
  fwd.probs.reserve(inputs.size());
  fwd.top_hidden.reserve(inputs.size());

  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (inputs[t].rows() != batch) {
      throw ShapeError("forward_sequence: step " + std::to_string(t) + " has shape " +
                       inputs[t].shape_string());
    }
    const Matrix* x = &inputs[t];
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      StepResult r = cell_step(model.layers[l], *x, states[l]);
      states[l] = std::move(r.state);
      fwd.caches[l].push_back(std::move(r.cache));
      x = &states[l].h;
    }
    Matrix logits = matmul_nt(*x, model.w_out);
    add_row_inplace(logits, model.b_out);
    fwd.probs.push_back(softmax_rows(logits));
    fwd.top_hidden.push_back(*x);
  }
  return fwd;
}

std::vector<Matrix> backward_sequence(const SequenceModel& model, const SequenceForward& fwd,
                                      std::span<const Matrix> grad_logits, GradientSet& grads) {
  const std::size_t steps = fwd.top_hidden.size();
  const std::size_t n_layers = model.layers.size();
  if (grad_logits.size() != steps) {
    throw ShapeError("backward_sequence: " + std::to_string(grad_logits.size()) +
                     " logit gradients for " + std::to_string(steps) + " steps");
  }
  std::vector<Matrix> grad_inputs(steps);

  // Gradients carried backward in time, per layer.
  std::vector<StepUpstream> carry(n_layers);
  for (std::size_t t = steps; t-- > 0;) {
    // dL/dh^t of the top layer from the read-out.
    Matrix dh_top = carry[n_layers - 1].grad_h.empty()
                        ? Matrix(fwd.top_hidden[t].rows(), model.hidden_size())
                        : std::move(carry[n_layers - 1].grad_h);
    if (!grad_logits[t].empty()) {
      add_matmul_tn(grads.w_out, grad_logits[t], fwd.top_hidden[t]);
      add_column_sums(grads.b_out, grad_logits[t]);
      add_matmul(dh_top, grad_logits[t], model.w_out);
    }
    carry[n_layers - 1].grad_h = std::move(dh_top);

    for (std::size_t l = n_layers; l-- > 0;) {
      const StepCache& cache = fwd.caches[l][t];
      if (carry[l].grad_h.empty()) carry[l].grad_h = Matrix(cache.h_prev.rows(), cache.h_prev.cols());
      StepGradients g = backward_step(model.layers[l], cache, carry[l], grads.layers[l]);
      if (l > 0) {
        // This layer's input at t is the layer below's h^t.
        Matrix& below = carry[l - 1].grad_h;
        if (below.empty()) below = Matrix(g.grad_x.rows(), g.grad_x.cols());
        add_inplace(below, g.grad_x);
      } else {
        grad_inputs[t] = std::move(g.grad_x);
      }
      carry[l].grad_h = std::move(g.grad_h_prev);
      carry[l].grad_c = std::move(g.grad_c_prev);
      carry[l].grad_h_prev2 = std::move(g.grad_h_prev2);
    }
  }
  return grad_inputs;
}

namespace {

void check_targets(const TargetGrid& targets, std::size_t steps, std::size_t batch) {
  if (targets.size() != steps) {
    throw ShapeError("targets cover " + std::to_string(targets.size()) + " steps, inputs " +
                     std::to_string(steps));
  }
  for (const auto& row : targets) {
    if (row.size() != batch) throw ShapeError("targets: batch width mismatch");
  }
}

// Sum of -ln p over non-ignored positions and their count.
std::pair<double, std::size_t> summed_loss(const std::vector<Matrix>& probs,
                                           const TargetGrid& targets) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    for (std::size_t b = 0; b < targets[t].size(); ++b) {
      const int y = targets[t][b];
      if (y < 0) continue;
      if (static_cast<std::size_t>(y) >= probs[t].cols()) {
        throw std::out_of_range("target " + std::to_string(y) + " at step " + std::to_string(t) +
                                " outside " + std::to_string(probs[t].cols()) + " classes");
      }
      total -= std::log(probs[t](b, static_cast<std::size_t>(y)));
      ++count;
    }
  }
  return {total, count};
}

}  // namespace

LossAndGradients bptt_gradients(const SequenceModel& model, std::span<const Matrix> inputs,
                                const TargetGrid& targets) {
  check_targets(targets, inputs.size(), inputs.empty() ? 0 : inputs.front().rows());
  SequenceForward fwd = forward_sequence(model, inputs);
  auto [total, count] = summed_loss(fwd.probs, targets);

  LossAndGradients out;
  out.counted = count;
  out.loss = count ? total / static_cast<double>(count) : 0.0;
  out.grads = model.zeros_like();

  // d(mean CE)/d logits = (p - onehot) / count at counted positions.
  std::vector<Matrix> grad_logits(fwd.probs.size());
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  for (std::size_t t = 0; t < fwd.probs.size(); ++t) {
    const auto& row_targets = targets[t];
    if (std::none_of(row_targets.begin(), row_targets.end(), [](int y) { return y >= 0; })) continue;
    Matrix g(fwd.probs[t].rows(), fwd.probs[t].cols());
    for (std::size_t b = 0; b < row_targets.size(); ++b) {
      if (row_targets[b] < 0) continue;
      for (std::size_t c = 0; c < g.cols(); ++c) g(b, c) = fwd.probs[t](b, c) * inv;
      g(b, static_cast<std::size_t>(row_targets[b])) -= inv;
    }
    grad_logits[t] = std::move(g);
  }
  out.grad_inputs = backward_sequence(model, fwd, grad_logits, out.grads);
  return out;
}

LossAndGradients bptt_gradients(const SequenceModel& model, const TaskBatch& batch) {
  const auto inputs = batch.one_hot_steps();
  return bptt_gradients(model, inputs, batch.target_grid());
}

double sequence_loss(const SequenceModel& model, std::span<const Matrix> inputs,
                     const TargetGrid& targets) {
  check_targets(targets, inputs.size(), inputs.empty() ? 0 : inputs.front().rows());
  const auto fwd = forward_sequence(model, inputs);
  auto [total, count] = summed_loss(fwd.probs, targets);
  return count ? total / static_cast<double>(count) : 0.0;
}

double sequence_loss(const SequenceModel& model, const TaskBatch& batch) {
  const auto inputs = batch.one_hot_steps();
  return sequence_loss(model, inputs, batch.target_grid());
}

Matrix central_difference(Matrix& theta, const std::function<double()>& loss, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("central_difference: eps must be positive");
  Matrix grad(theta.rows(), theta.cols());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta.data()[i];
    theta.data()[i] = saved + eps;
    const double up = loss();
    theta.data()[i] = saved - eps;
    const double down = loss();
    theta.data()[i] = saved;
    grad.data()[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

GradientSet finite_diff_gradient(const SequenceModel& model,
                                 const std::function<double(const SequenceModel&)>& loss,
                                 double eps) {
  SequenceModel probe = model;
  GradientSet grads = model.zeros_like();
  std::vector<Matrix*> slots;
  grads.for_each([&](const std::string&, Matrix& m) { slots.push_back(&m); });
  std::size_t k = 0;
  probe.for_each([&](const std::string&, Matrix& theta) {
    *slots[k++] = central_difference(theta, [&] { return loss(probe); }, eps);
  });
  return grads;
}

GradientSet finite_diff_gradient(const SequenceModel& model, const TaskBatch& batch, double eps) {
  const auto inputs = batch.one_hot_steps();
  const auto targets = batch.target_grid();
  return finite_diff_gradient(
      model, [&](const SequenceModel& m) { return sequence_loss(m, inputs, targets); }, eps);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

GradientComparison compare_gradients(const GradientSet& analytic, const GradientSet& numeric) {
  std::vector<const Matrix*> rhs;
  numeric.for_each([&](const std::string&, const Matrix& m) { rhs.push_back(&m); });
  GradientComparison cmp;
  std::size_t k = 0;
  analytic.for_each([&](const std::string& name, const Matrix& a) {
    const Matrix& n = *rhs.at(k++);
    if (!a.same_shape(n)) throw ShapeError("compare_gradients: layout mismatch at " + name);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double e = relative_error(a.data()[i], n.data()[i]);
      if (e > cmp.max_relative_error || cmp.worst_parameter.empty()) {
        cmp.max_relative_error = e;
        cmp.worst_parameter = name;
        cmp.worst_index = i;
        cmp.worst_analytic = a.data()[i];
        cmp.worst_numeric = n.data()[i];
      }
    }
  });
  return cmp;
}

std::vector<double> gradient_probe(const CellParams& cell, std::size_t T, Rng& rng) {
  if (T < 2) throw std::invalid_argument("gradient_probe: T must be >= 2");
  const std::size_t d_h = cell.hidden_size;
  std::vector<StepCache> caches;
  caches.reserve(T);
  CellState state = CellState::zeros(cell, 1);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix x(1, cell.input_size);
    for (double& v : x.flat()) v = rng.uniform(-1.0, 1.0);
    StepResult r = cell_step(cell, x, state);
    state = std::move(r.state);
    caches.push_back(std::move(r.cache));
  }

  // squared[k-1] accumulates sum_i ||d h^T_i / d h^k||^2.
  std::vector<double> squared(T - 1, 0.0);
  CellParams scratch = cell.zeros_like();
  for (std::size_t unit = 0; unit < d_h; ++unit) {
    StepUpstream up;
    up.grad_h = Matrix(1, d_h);
    up.grad_h(0, unit) = 1.0;
    // caches[t] is step t+1; its grad_h_prev is the complete gradient on h^t.
    for (std::size_t t = T; t-- > 1;) {
      StepGradients g = backward_step(cell, caches[t], up, scratch);
      for (double v : g.grad_h_prev.flat()) squared[t - 1] += v * v;
      up.grad_h = std::move(g.grad_h_prev);
      up.grad_c = std::move(g.grad_c_prev);
      up.grad_h_prev2 = std::move(g.grad_h_prev2);
    }
  }
  std::vector<double> norms(T - 1);
  std::transform(squared.begin(), squared.end(), norms.begin(), [](double s) { return std::sqrt(s); });
  return norms;
}

GradCheckReport run_gradient_check(const GradCheckCase& config, std::uint64_t seed,
                                   bool inject_bug) {
  constexpr std::size_t kInput = 3, kHidden = 4, kSteps = 6, kBatch = 2, kClasses = 5;
  Rng rng(seed);
  ModelSpec spec;
  spec.kind = config.kind;
  spec.tfc = config.tfc;
  spec.input_size = kInput;
  spec.hidden_size = kHidden;
  spec.num_classes = kClasses;
  spec.layers = config.layers;
  SequenceModel model = make_model(spec, rng);
  // Nonzero biases so no gate sits at a symmetric point.
  model.for_each([&](const std::string& name, Matrix& m) {
    if (name.find(".b_") != std::string::npos) {
      for (double& v : m.flat()) v = rng.uniform(-0.5, 0.5);
    }
  });

  std::vector<Matrix> inputs;
  TargetGrid targets(kSteps, std::vector<int>(kBatch));
  for (std::size_t t = 0; t < kSteps; ++t) {
    Matrix x(kBatch, kInput);
    for (double& v : x.flat()) v = rng.uniform(-1.0, 1.0);
    inputs.push_back(std::move(x));
    for (int& y : targets[t]) y = static_cast<int>(rng.index(kClasses));
  }

  LossAndGradients analytic = bptt_gradients(model, inputs, targets);
  if (inject_bug) analytic.grads.layers.front().gates.front().W(0, 0) += 1e-2;
  const GradientSet numeric = finite_diff_gradient(
      model, [&](const SequenceModel& m) { return sequence_loss(m, inputs, targets); }, 1e-5);

  GradCheckReport report;
  report.config = config;
  report.comparison = compare_gradients(analytic.grads, numeric);
  report.passed = report.comparison.max_relative_error < kGradCheckTolerance;
  return report;
}

}  // namespace rnnlab
