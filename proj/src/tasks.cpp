// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace rnnlab {

std::vector<Matrix> TaskBatch::one_hot_steps() const {
  std::vector<Matrix> steps;
  steps.reserve(length());
  for (std::size_t t = 0; t < length(); ++t) {
    Matrix x(batch_size(), n_in);
    for (std::size_t b = 0; b < batch_size(); ++b) x(b, static_cast<std::size_t>(inputs[b][t])) = 1.0;
    steps.push_back(std::move(x));
  }
  return steps;
}

TargetGrid TaskBatch::target_grid() const {
  TargetGrid grid(length(), std::vector<int>(batch_size()));
  for (std::size_t b = 0; b < batch_size(); ++b)
    for (std::size_t t = 0; t < length(); ++t) grid[t][b] = targets[b][t];
  return grid;
}

TaskBatch gen_copy(std::size_t T, std::size_t batch, Rng& rng) {
  using namespace copy_task;
  if (T < 1 || batch < 1) throw std::invalid_argument("gen_copy: T and batch must be >= 1");
  TaskBatch out;
  out.kind = TaskKind::Copy;
  out.T = T;
  out.n_in = kInputSymbols;
  out.n_out = kOutputClasses;
  out.baseline = baseline_copy(T);
  const std::size_t len = T + 20;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<int> in(len, kBlank);
    std::vector<int> tgt(len, kBlank);
    for (std::size_t i = 0; i < kAnswerLength; ++i) {
      const int sym = static_cast<int>(rng.index(kDataSymbols));
      in[i] = sym;
      tgt[T + 10 + i] = sym;
    }
    in[T + 9] = kMarker;
    out.inputs.push_back(std::move(in));
    out.targets.push_back(std::move(tgt));
  }
  return out;
}

TaskBatch gen_denoise(std::size_t T, std::size_t batch, Rng& rng) {
  using namespace denoise_task;
  if (T < kAnswerLength) {
    throw std::invalid_argument("gen_denoise: T must be >= 10 to hold the data symbols, got " +
                                std::to_string(T));
  }
  if (batch < 1) throw std::invalid_argument("gen_denoise: batch must be >= 1");
  TaskBatch out;
  out.kind = TaskKind::Denoise;
  out.T = T;
  out.n_in = kInputSymbols;
  out.n_out = kOutputClasses;
  out.baseline = baseline_denoise(T);
  const std::size_t len = T + 20;
  std::vector<std::size_t> positions(T);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<int> in(len, kNoise);
    std::vector<int> tgt(len, kNoise);
    // Partial Fisher-Yates: the first 10 slots become a uniform 10-subset.
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    for (std::size_t i = 0; i < kAnswerLength; ++i) {
      const std::size_t j = i + rng.index(T - i);
      std::swap(positions[i], positions[j]);
    }
    std::sort(positions.begin(), positions.begin() + kAnswerLength);
    for (std::size_t i = 0; i < kAnswerLength; ++i) {
      const int sym = static_cast<int>(rng.index(kDataSymbols));
      in[positions[i]] = sym;
      tgt[T + 10 + i] = sym;
    }
    in[T + 9] = kMarker;
    out.inputs.push_back(std::move(in));
    out.targets.push_back(std::move(tgt));
  }
  return out;
}

TaskBatch gen_task(TaskKind kind, std::size_t T, std::size_t batch, Rng& rng) {
  return kind == TaskKind::Copy ? gen_copy(T, batch, rng) : gen_denoise(T, batch, rng);
}

double baseline_copy(std::size_t T) {
  return 10.0 * std::log(8.0) / static_cast<double>(T + 20);
}

double baseline_denoise(std::size_t T) {
  if (T < kAnswerLength) throw std::invalid_argument("baseline_denoise: T must be >= 10");
  return 10.0 * std::log(9.0) / static_cast<double>(T + 20);
}

double baseline(TaskKind kind, std::size_t T) {
  return kind == TaskKind::Copy ? baseline_copy(T) : baseline_denoise(T);
}

std::string_view task_name(TaskKind kind) { return kind == TaskKind::Copy ? "copy" : "denoise"; }

void dump_batch(std::ostream& os, const TaskBatch& batch) {
  for (std::size_t b = 0; b < batch.batch_size(); ++b) {
    for (std::size_t t = 0; t < batch.length(); ++t) os << (t ? " " : "") << batch.inputs[b][t];
    os << " |";
    for (std::size_t t = 0; t < batch.length(); ++t) os << ' ' << batch.targets[b][t];
    os << '\n';
  }
}

}  // namespace rnnlab
