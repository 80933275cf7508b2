// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/babi.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rnnlab/optim.hpp"
#include "rnnlab/train.hpp"

namespace rnnlab::babi {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("bAbI parse error at line " + std::to_string(line) + ": " + what),
      line_(line) {}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    while (!current.empty() &&
           (current.back() == '.' || current.back() == '?' || current.back() == '!')) {
      current.pop_back();
    }
    if (!current.empty()) out.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<int> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  for (char ch : s) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) return std::nullopt;
    v = v * 10 + (ch - '0');
  }
  return v;
}

std::string join(const Tokens& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += ' ';
    out += t[i];
  }
  return out;
}

}  // namespace

std::vector<QAExample> parse_babi(std::string_view text) {
  std::vector<QAExample> out;
  std::vector<Tokens> story;
  std::vector<int> story_lines;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    const std::size_t space = line.find(' ');
    const auto number = parse_int(space == std::string_view::npos ? line : line.substr(0, space));
    if (!number || space == std::string_view::npos) {
      throw ParseError(line_no, "expected '<n> <text>'");
    }
    if (*number == 1) {
      story.clear();
      story_lines.clear();
    }
    const std::string_view body = line.substr(space + 1);
    if (body.find('\t') == std::string_view::npos) {
      story.push_back(tokenize(body));
      story_lines.push_back(*number);
      continue;
    }

    const auto fields = split(body, '\t');
    if (fields.size() < 3) {
      throw ParseError(line_no, "question line needs '<question>\\t<answer>\\t<supporting ids>'");
    }
    QAExample ex;
    ex.sentences = story;
    ex.sentence_lines = story_lines;
    ex.question = tokenize(fields[0]);
    ex.question_line = *number;
    ex.answer = std::string(trim(fields[1]));
    for (std::string_view id : split(trim(fields[2]), ' ')) {
      if (id.empty()) continue;
      const auto v = parse_int(id);
      if (!v) throw ParseError(line_no, "bad supporting fact id '" + std::string(id) + "'");
      if (std::find(story_lines.begin(), story_lines.end(), *v) == story_lines.end()) {
        throw ParseError(line_no, "supporting fact " + std::to_string(*v) +
                                      " is not a line of the current story");
      }
      ex.supporting.push_back(*v);
    }
    if (ex.question.empty()) throw ParseError(line_no, "empty question");
    if (ex.answer.empty()) throw ParseError(line_no, "empty answer");
    out.push_back(std::move(ex));
  }
  return out;
}

std::string serialize_babi(const std::vector<QAExample>& examples) {
  std::ostringstream os;
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.sentences.size(); ++i) {
      os << ex.sentence_lines[i] << ' ' << join(ex.sentences[i]) << ".\n";
    }
    os << ex.question_line << ' ' << join(ex.question) << "?\t" << ex.answer << '\t';
    for (std::size_t i = 0; i < ex.supporting.size(); ++i) os << (i ? " " : "") << ex.supporting[i];
    os << '\n';
  }
  return os.str();
}

std::vector<QAExample> load_babi_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open bAbI file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_babi(buf.str());
}

Vocab Vocab::build(const std::vector<QAExample>& train) {
  Vocab v;
  auto add_token = [&](const std::string& t) {
    if (v.token_index_.emplace(t, v.tokens_.size()).second) v.tokens_.push_back(t);
  };
  add_token("<pad>");
  add_token("<unk>");
  for (const auto& ex : train) {
    for (const auto& s : ex.sentences)
      for (const auto& t : s) add_token(t);
    for (const auto& t : ex.question) add_token(t);
    if (v.answer_index_.emplace(ex.answer, v.answers_.size()).second) v.answers_.push_back(ex.answer);
  }
  return v;
}

std::size_t Vocab::index(const std::string& token) const {
  auto it = token_index_.find(token);
  return it == token_index_.end() ? kUnknown : it->second;
}

std::optional<std::size_t> Vocab::answer_index(const std::string& answer) const {
  auto it = answer_index_.find(answer);
  if (it == answer_index_.end()) return std::nullopt;
  return it->second;
}

namespace {

// Token indices of every input step: sentences then the question.
std::vector<std::vector<std::size_t>> step_tokens(const QAExample& ex, const Vocab& vocab) {
  std::vector<std::vector<std::size_t>> steps;
  steps.reserve(ex.sentences.size() + 1);
  auto convert = [&](const Tokens& t) {
    std::vector<std::size_t> ids;
    ids.reserve(t.size());
    for (const auto& tok : t) ids.push_back(vocab.index(tok));
    return ids;
  };
  for (const auto& s : ex.sentences) steps.push_back(convert(s));
  steps.push_back(convert(ex.question));
  return steps;
}

void mean_embedding(const std::vector<std::size_t>& ids, const Matrix& embedding,
                    std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (ids.empty()) return;
  const double w = 1.0 / static_cast<double>(ids.size());
  for (std::size_t id : ids) {
    auto row = embedding.row(id);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * row[j];
  }
}

struct EncodedBatch {
  std::vector<Matrix> inputs;  // right-padded with zero rows
  TargetGrid targets;          // label at each row's question step, -1 elsewhere
  std::vector<std::vector<std::vector<std::size_t>>> tokens;  // [row][step]
};

EncodedBatch encode_batch(const BabiModel& model, const std::vector<const QAExample*>& batch) {
  EncodedBatch eb;
  std::size_t max_len = 0;
  for (const QAExample* ex : batch) {
    eb.tokens.push_back(step_tokens(*ex, model.vocab));
    max_len = std::max(max_len, eb.tokens.back().size());
  }
  const std::size_t dim = model.embedding.cols();
  eb.inputs.assign(max_len, Matrix(batch.size(), dim));
  eb.targets.assign(max_len, std::vector<int>(batch.size(), -1));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& steps = eb.tokens[b];
    for (std::size_t t = 0; t < steps.size(); ++t) {
      mean_embedding(steps[t], model.embedding, eb.inputs[t].row(b));
    }
    const auto label = model.vocab.answer_index(batch[b]->answer);
    eb.targets[steps.size() - 1][b] = label ? static_cast<int>(*label) : -1;
  }
  return eb;
}

}  // namespace

std::vector<Matrix> encode_example(const QAExample& ex, const Vocab& vocab, const Matrix& embedding) {
  std::vector<Matrix> out;
  for (const auto& ids : step_tokens(ex, vocab)) {
    Matrix m(1, embedding.cols());
    mean_embedding(ids, embedding, m.row(0));
    out.push_back(std::move(m));
  }
  return out;
}

void BabiConfig::validate() const {
  if (hidden < 1 || layers < 1 || embedding < 1 || batch < 1 || epochs < 1) {
    throw std::invalid_argument("bAbI config: sizes and epochs must be positive");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("bAbI config: learning rate must be > 0");
}

BabiModel make_babi_model(const std::vector<QAExample>& train, const BabiConfig& cfg) {
  cfg.validate();
  BabiModel m;
  m.vocab = Vocab::build(train);
  if (m.vocab.answer_count() == 0) throw std::invalid_argument("bAbI: no training questions");
  Rng rng(cfg.seed);
  m.embedding = glorot_init(m.vocab.size(), cfg.embedding, rng);
  ModelSpec spec;
  spec.kind = cfg.cell;
  spec.tfc = cfg.tfc;
  spec.input_size = cfg.embedding;
  spec.hidden_size = cfg.hidden;
  spec.num_classes = m.vocab.answer_count();
  spec.layers = cfg.layers;
  m.rnn = make_model(spec, rng);
  return m;
}

BabiBatchResult babi_batch_gradients(const BabiModel& model,
                                     const std::vector<const QAExample*>& batch) {
  const EncodedBatch eb = encode_batch(model, batch);
  LossAndGradients lg = bptt_gradients(model.rnn, eb.inputs, eb.targets);
  BabiBatchResult out;
  out.loss = lg.loss;
  out.grads = std::move(lg.grads);
  out.grad_embedding = Matrix(model.embedding.rows(), model.embedding.cols());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& steps = eb.tokens[b];
    for (std::size_t t = 0; t < steps.size(); ++t) {
      if (steps[t].empty()) continue;
      const double w = 1.0 / static_cast<double>(steps[t].size());
      auto g = lg.grad_inputs[t].row(b);
      for (std::size_t id : steps[t]) {
        auto dst = out.grad_embedding.row(id);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * g[j];
      }
    }
  }
  return out;
}

TrainedTask train_babi(const std::vector<QAExample>& train_all, const BabiConfig& cfg) {
  cfg.validate();
  std::vector<QAExample> train(train_all.begin(),
                               cfg.max_train_examples && cfg.max_train_examples < train_all.size()
                                   ? train_all.begin() + static_cast<std::ptrdiff_t>(cfg.max_train_examples)
                                   : train_all.end());
  TrainedTask out;
  out.model = make_babi_model(train, cfg);
  out.train_size = train.size();
  Optimizer opt(OptimizerKind::Adam, cfg.learning_rate);
  Rng shuffle_rng(cfg.seed ^ 0x5851F42D4C957F2DULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::vector<const QAExample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i) {
        batch.push_back(&train[order[i]]);
      }
      BabiBatchResult r = babi_batch_gradients(out.model, batch);
      if (!std::isfinite(r.loss)) {
        throw NumericAbort(epoch, "bAbI loss is not finite in epoch " + std::to_string(epoch));
      }
      std::vector<Matrix*> params{&out.model.embedding};
      std::vector<const Matrix*> grads{&r.grad_embedding};
      for (Matrix* p : parameter_list(out.model.rnn)) params.push_back(p);
      for (const Matrix* g : parameter_list(std::as_const(r.grads))) grads.push_back(g);
      opt.step(params, grads);
      total += r.loss * static_cast<double>(batch.size());
    }
    out.history.push_back({epoch, total / static_cast<double>(std::max<std::size_t>(1, train.size()))});
  }
  return out;
}

std::vector<std::size_t> predict(const BabiModel& model, const std::vector<QAExample>& examples) {
  constexpr std::size_t kChunk = 128;
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    std::vector<const QAExample*> batch;
    for (std::size_t i = start; i < std::min(examples.size(), start + kChunk); ++i) {
      batch.push_back(&examples[i]);
    }
    const EncodedBatch eb = encode_batch(model, batch);
    const SequenceForward fwd = forward_sequence(model.rnn, eb.inputs);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      out.push_back(argmax_row(fwd.probs[eb.tokens[b].size() - 1], b));
    }
  }
  return out;
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<QAExample>& gold,
                const Vocab& vocab) {
  if (predicted.size() != gold.size()) throw ShapeError("accuracy: prediction count mismatch");
  if (gold.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto label = vocab.answer_index(gold[i].answer);
    if (label && *label == predicted[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gold.size());
}

double eval_babi(const BabiModel& model, const std::vector<QAExample>& test) {
  return accuracy(predict(model, test), test, model.vocab);
}

double majority_baseline(const std::vector<QAExample>& train, const std::vector<QAExample>& test) {
  if (train.empty() || test.empty()) return 0.0;
  // Ties resolve to the answer seen first.
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& ex : train) {
    if (counts[ex.answer]++ == 0) order.push_back(ex.answer);
  }
  std::string best = order.front();
  for (const auto& a : order) {
    if (counts[a] > counts[best]) best = a;
  }
  const auto hits = std::count_if(test.begin(), test.end(),
                                  [&](const QAExample& ex) { return ex.answer == best; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(test.size());
}

namespace {

constexpr std::array<std::string_view, kTaskCount> kTitles = {
    "Single Supporting Fact", "Two Supporting Facts",  "Three Supporting Facts",
    "Two Arg. Relations",     "Three Arg. Relations",  "Yes/No Questions",
    "Counting",               "Lists/Sets",            "Simple Negation",
    "Indefinite Knowledge",   "Basic Coreference",     "Conjunction",
    "Compound Coref",         "Time Reasoning",        "Basic Deduction",
    "Basic Induction",        "Positional Reasoning",  "Size Reasoning",
    "Path Finding",           "Agent's Motivations"};

constexpr std::array<ReferenceRow, kTaskCount> kReference = {{
    {74.1, 51.3, 50.5}, {41.6, 42.3, 42.1}, {45.2, 48.7, 37.0}, {68.4, 66.6, 64.2},
    {83.5, 83.5, 84.2}, {73.1, 50.3, 68.5}, {79.6, 80.4, 79.5}, {89.4, 77.9, 90.5},
    {63.8, 63.8, 74.7}, {57.4, 66.7, 60.9}, {87.7, 85.2, 74.6}, {93.1, 94.1, 76.8},
    {94.4, 94.3, 94.4}, {45.7, 48.5, 39.7}, {60.9, 58.7, 68.4}, {48.2, 50.4, 48.0},
    {59.7, 48.0, 59.7}, {46.9, 58.5, 53.1}, {18.1, 9.8, 8.3},   {98.2, 98.3, 98.9},
}};

void check_task_id(std::size_t task_id) {
  if (task_id < 1 || task_id > kTaskCount) {
    throw std::out_of_range("bAbI task id must be in 1..20, got " + std::to_string(task_id));
  }
}

std::optional<double> reference_for(std::size_t task_id, const std::string& cell) {
  const ReferenceRow r = reference_accuracy(task_id);
  if (cell == "tfc-sgru") return r.tfc_sgru;
  if (cell == "lstm") return r.lstm;
  if (cell == "gru") return r.gru;
  return std::nullopt;
}

std::optional<double> reference_mean(const std::string& cell) {
  if (cell == "tfc-sgru") return kReferenceMean.tfc_sgru;
  if (cell == "lstm") return kReferenceMean.lstm;
  if (cell == "gru") return kReferenceMean.gru;
  return std::nullopt;
}

std::string fixed(std::optional<double> v, int digits = 2) {
  if (!v) return "-";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(digits) << *v;
  return os.str();
}

}  // namespace

std::string_view task_title(std::size_t task_id) {
  check_task_id(task_id);
  return kTitles[task_id - 1];
}

ReferenceRow reference_accuracy(std::size_t task_id) {
  check_task_id(task_id);
  return kReference[task_id - 1];
}

TaskFiles locate_task(const std::filesystem::path& dir, std::size_t task_id) {
  check_task_id(task_id);
  const std::string prefix = "qa" + std::to_string(task_id) + "_";
  TaskFiles files;
  std::error_code ec;
  if (std::filesystem::is_directory(dir, ec)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind(prefix, 0) != 0) continue;
      if (name.ends_with("_train.txt")) files.train = entry.path();
      if (name.ends_with("_test.txt")) files.test = entry.path();
    }
  }
  if (files.train.empty()) {
    throw DataError("missing bAbI training file " + (dir / (prefix + "*_train.txt")).string());
  }
  if (files.test.empty()) {
    throw DataError("missing bAbI test file " + (dir / (prefix + "*_test.txt")).string());
  }
  return files;
}

std::string cell_label(CellKind kind, bool tfc) {
  return (tfc ? "tfc-" : "") + std::string(cell_name(kind));
}

TaskResult run_task(const std::filesystem::path& dir, std::size_t task_id, const BabiConfig& cfg) {
  const TaskFiles files = locate_task(dir, task_id);
  const auto train = load_babi_file(files.train);
  const auto test = load_babi_file(files.test);
  TrainedTask trained = train_babi(train, cfg);
  TaskResult r;
  r.task_id = task_id;
  r.cell = cell_label(cfg.cell, cfg.tfc);
  r.accuracy = eval_babi(trained.model, test);
  r.majority = majority_baseline(train, test);
  r.train_size = trained.train_size;
  r.test_size = test.size();
  r.final_loss = trained.history.empty() ? 0.0 : trained.history.back().mean_loss;
  return r;
}

std::optional<double> ResultTable::mean(const std::string& cell) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.cell == cell && r.accuracy) {
      sum += *r.accuracy;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<std::string> ResultTable::cells() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.cell) == out.end()) out.push_back(r.cell);
  }
  return out;
}

void ResultTable::write_csv(std::ostream& os) const {
  os << "task_id,task_name,cell,accuracy\n";
  for (const auto& r : rows) {
    os << r.task_id << ",\"" << task_title(r.task_id) << "\"," << r.cell << ','
       << (r.accuracy ? format_real(*r.accuracy) : std::string("failed")) << '\n';
  }
  for (const auto& cell : cells()) {
    const auto m = mean(cell);
    os << "mean,\"Mean Accuracy\"," << cell << ',' << (m ? format_real(*m) : std::string("failed"))
       << '\n';
  }
}

void ResultTable::write_report(std::ostream& os) const {
  os << std::left << std::setw(4) << "ID" << std::setw(25) << "Task" << std::setw(10) << "Cell"
     << std::right << std::setw(10) << "Accuracy" << std::setw(11) << "Published" << std::setw(10)
     << "Majority" << std::setw(8) << "Train" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(4) << r.task_id << std::setw(25) << task_title(r.task_id)
       << std::setw(10) << r.cell << std::right << std::setw(10)
       << (r.accuracy ? fixed(r.accuracy) : std::string("failed")) << std::setw(11)
       << fixed(reference_for(r.task_id, r.cell), 1) << std::setw(10) << fixed(r.majority)
       << std::setw(8) << r.train_size;
    if (!r.error.empty()) os << "  " << r.error;
    os << '\n';
  }
  for (const auto& cell : cells()) {
    os << std::left << std::setw(4) << "" << std::setw(25) << "Mean Accuracy" << std::setw(10)
       << cell << std::right << std::setw(10) << fixed(mean(cell)) << std::setw(11)
       << fixed(reference_mean(cell)) << '\n';
  }
}

ResultTable run_all_tasks(const std::filesystem::path& dir, const BabiConfig& cfg) {
  ResultTable table;
  for (std::size_t id = 1; id <= kTaskCount; ++id) {
    try {
      table.rows.push_back(run_task(dir, id, cfg));
    } catch (const std::exception& e) {
      TaskResult r;
      r.task_id = id;
      r.cell = cell_label(cfg.cell, cfg.tfc);
      r.error = e.what();
      table.rows.push_back(std::move(r));
    }
  }
  return table;
}

}  // namespace rnnlab::babi
