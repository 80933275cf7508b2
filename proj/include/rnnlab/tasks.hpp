// SPDX-License-Identifier: Apache-2.0
//
// Synthetic long-range benchmarks. Sequences have length T + 20; positions
// are 0-based.
//
// Copy (10 input symbols, 9 output classes):
//   input   [10 data from 0..7][T-1 blanks (8)][marker (9)][10 blanks]
//   target  [T+10 blanks][the 10 data symbols]
//
// Denoise (11 input symbols, 10 output classes):
//   input   first T steps are noise (9) except 10 data symbols from 0..8 at
//           sorted random positions; marker (10) at T+9; everything else noise
//   target  [T+10 noise][the 10 data symbols in position order]

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "rnnlab/bptt.hpp"
#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

enum class TaskKind { Copy, Denoise };

namespace copy_task {
inline constexpr std::size_t kInputSymbols = 10;
inline constexpr std::size_t kOutputClasses = 9;
inline constexpr std::size_t kDataSymbols = 8;
inline constexpr int kBlank = 8;
inline constexpr int kMarker = 9;
}  // namespace copy_task

namespace denoise_task {
inline constexpr std::size_t kInputSymbols = 11;
inline constexpr std::size_t kOutputClasses = 10;
inline constexpr std::size_t kDataSymbols = 9;
inline constexpr int kNoise = 9;
inline constexpr int kMarker = 10;
}  // namespace denoise_task

inline constexpr std::size_t kAnswerLength = 10;

struct TaskBatch {
  TaskKind kind = TaskKind::Copy;
  std::size_t T = 0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<std::vector<int>> inputs;   // [row][step] symbol indices
  std::vector<std::vector<int>> targets;  // [row][step] class indices
  double baseline = 0.0;

  std::size_t batch_size() const { return inputs.size(); }
  std::size_t length() const { return T + 20; }
  /// One-hot input for every step, each (batch x n_in).
  std::vector<Matrix> one_hot_steps() const;
  /// Targets in time-major layout for the loss.
  TargetGrid target_grid() const;
};

TaskBatch gen_copy(std::size_t T, std::size_t batch, Rng& rng);
TaskBatch gen_denoise(std::size_t T, std::size_t batch, Rng& rng);
TaskBatch gen_task(TaskKind kind, std::size_t T, std::size_t batch, Rng& rng);

/// 10 ln 8 / (T + 20)
double baseline_copy(std::size_t T);
/// 10 ln 9 / (T + 20)
double baseline_denoise(std::size_t T);
double baseline(TaskKind kind, std::size_t T);

std::string_view task_name(TaskKind kind);

/// One line per row: input symbols, " | ", target symbols, space separated.
void dump_batch(std::ostream& os, const TaskBatch& batch);

}  // namespace rnnlab
