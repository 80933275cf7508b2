// SPDX-License-Identifier: Apache-2.0
//
// Training loop for the synthetic tasks: a fresh batch every step, full BPTT,
// one optimizer update, and detection of the first step whose training loss
// drops below the task's memoryless baseline.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnnlab/bptt.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/tasks.hpp"

namespace rnnlab {

struct TrainConfig {
  double learning_rate = 0.001;
  double decay_rate = 0.9;
  std::size_t batch_size = 128;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::RMSProp;
  std::optional<double> grad_clip;  // global-norm threshold
  std::size_t eval_every = 10;
  bool stop_at_crossing = false;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double baseline = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::optional<std::size_t> crossed_at;  // first step with loss < baseline
  std::size_t steps_run = 0;
  double final_loss = 0.0;
  double baseline = 0.0;

  /// Header `step,loss,baseline,wall_ms`, one row per record.
  void write_csv(std::ostream& os) const;
  /// `crossed_baseline_at=<step|never> final_loss=<x> baseline=<b>`
  std::string summary() const;
};

/// Training diverged; carries the step and gradient diagnostics.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(std::size_t step, const std::string& detail);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

using StepCallback = std::function<void(const TrainRecord&)>;

TrainLog train_task(SequenceModel& model, TaskKind task, std::size_t T, const TrainConfig& cfg,
                    const StepCallback& on_record = {});

/// Shortest round-trip decimal form, independent of locale.
std::string format_real(double v);

}  // namespace rnnlab
