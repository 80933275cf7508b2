// SPDX-License-Identifier: Apache-2.0
//
// bAbI question answering at sentence level. Each sentence is encoded as the
// mean of its word embeddings; the recurrent stack reads
// [sentence_1, ..., sentence_n, question] and the answer label is predicted
// from the top hidden state at the question step.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rnnlab/bptt.hpp"
#include "rnnlab/cells.hpp"
#include "rnnlab/matrix.hpp"

namespace rnnlab::babi {

using Tokens = std::vector<std::string>;

struct QAExample {
  std::vector<Tokens> sentences;   // story so far, question lines excluded
  std::vector<int> sentence_lines; // original line number of each sentence
  Tokens question;
  int question_line = 0;
  std::string answer;              // comma-joined for multi-word answers
  std::vector<int> supporting;     // 1-based line numbers

  friend bool operator==(const QAExample&, const QAExample&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Missing task files; the message names the expected path.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercases, strips terminal . ? ! and splits on whitespace.
Tokens tokenize(std::string_view text);

/// Parses bAbI v1.2 text. A line numbered 1 starts a new story.
std::vector<QAExample> parse_babi(std::string_view text);
/// Writes each example as its own story, preserving original line numbers.
std::string serialize_babi(const std::vector<QAExample>& examples);
std::vector<QAExample> load_babi_file(const std::filesystem::path& path);

class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnknown = 1;

  /// Token and answer indices in first-occurrence order over `train`.
  static Vocab build(const std::vector<QAExample>& train);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t index(const std::string& token) const;
  const std::string& token(std::size_t i) const { return tokens_.at(i); }

  std::size_t answer_count() const noexcept { return answers_.size(); }
  /// std::nullopt for answers never seen in training.
  std::optional<std::size_t> answer_index(const std::string& answer) const;
  const std::string& answer(std::size_t i) const { return answers_.at(i); }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.answers_ == b.answers_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> token_index_;
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> answer_index_;
};

/// Mean-of-embeddings per sentence, question last. Each entry is 1 x dim.
std::vector<Matrix> encode_example(const QAExample& ex, const Vocab& vocab,
                                   const Matrix& embedding);

struct BabiConfig {
  CellKind cell = CellKind::SGRU;
  bool tfc = true;
  std::size_t hidden = 40;
  std::size_t layers = 2;
  std::size_t embedding = 128;
  std::size_t batch = 128;
  double learning_rate = 0.001;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::size_t max_train_examples = 0;  // 0 keeps the whole split

  void validate() const;
};

struct BabiModel {
  Vocab vocab;
  Matrix embedding;  // vocab x embedding
  SequenceModel rnn;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

struct TrainedTask {
  BabiModel model;
  std::vector<EpochStats> history;
  std::size_t train_size = 0;
};

BabiModel make_babi_model(const std::vector<QAExample>& train, const BabiConfig& cfg);

/// Mean loss and parameter gradients (embedding included) over a batch.
struct BabiBatchResult {
  double loss = 0.0;
  Matrix grad_embedding;
  GradientSet grads;
};
BabiBatchResult babi_batch_gradients(const BabiModel& model,
                                     const std::vector<const QAExample*>& batch);

TrainedTask train_babi(const std::vector<QAExample>& train, const BabiConfig& cfg);

/// argmax label index per example.
std::vector<std::size_t> predict(const BabiModel& model, const std::vector<QAExample>& examples);
/// Percentage of predictions equal to the gold label; unseen gold labels count as wrong.
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<QAExample>& gold,
                const Vocab& vocab);
double eval_babi(const BabiModel& model, const std::vector<QAExample>& test);

/// Most frequent training answer, scored on `test`.
double majority_baseline(const std::vector<QAExample>& train, const std::vector<QAExample>& test);

// ---------------------------------------------------------------------------
// The 20-task protocol.

inline constexpr std::size_t kTaskCount = 20;
std::string_view task_title(std::size_t task_id);

/// Published test accuracies (TFC-SGRU, LSTM, GRU) for the run report.
struct ReferenceRow {
  double tfc_sgru, lstm, gru;
};
ReferenceRow reference_accuracy(std::size_t task_id);
inline constexpr ReferenceRow kReferenceMean{66.45, 63.87, 63.70};

struct TaskFiles {
  std::filesystem::path train;
  std::filesystem::path test;
};
/// Finds qa<N>_*_train.txt / qa<N>_*_test.txt under `dir`; throws DataError.
TaskFiles locate_task(const std::filesystem::path& dir, std::size_t task_id);

struct TaskResult {
  std::size_t task_id = 0;
  std::string cell;
  std::optional<double> accuracy;  // empty when the task failed
  std::string error;
  double majority = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double final_loss = 0.0;
};

TaskResult run_task(const std::filesystem::path& dir, std::size_t task_id, const BabiConfig& cfg);

struct ResultTable {
  std::vector<TaskResult> rows;
  /// Unweighted mean over the rows of `cell` that have an accuracy.
  std::optional<double> mean(const std::string& cell) const;
  std::vector<std::string> cells() const;

  /// Header `task_id,task_name,cell,accuracy`; one mean row per cell.
  void write_csv(std::ostream& os) const;
  /// Aligned table with published numbers alongside.
  void write_report(std::ostream& os) const;
};

/// Runs every task for `cfg`; a failing task is recorded and the rest continue.
ResultTable run_all_tasks(const std::filesystem::path& dir, const BabiConfig& cfg);

std::string cell_label(CellKind kind, bool tfc);

}  // namespace rnnlab::babi
