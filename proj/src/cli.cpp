// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rnnlab/babi.hpp"
#include "rnnlab/bptt.hpp"
#include "rnnlab/tasks.hpp"
#include "rnnlab/train.hpp"

namespace rnnlab::cli {

namespace {

constexpr std::string_view kCellChoices = "{rnn,gru,lstm,sgru}";

struct RunSpec {
  std::string cell = "sgru";
  bool tfc = false;
  std::size_t time_steps = 100;
  std::size_t hidden = 128;
  std::size_t layers = 1;
  std::size_t batch = 128;
  double lr = 0.001;
  double decay = 0.9;
  std::string optimizer = "rmsprop";
  std::size_t max_steps = 1000;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::optional<double> grad_clip;
  std::string out;
  std::size_t eval_every = 10;
  bool stop_at_crossing = false;
  std::string dump;
  // train-babi
  std::size_t task = 0;
  bool all = false;
  std::string babi_dir;
  std::size_t embedding = 128;
  std::size_t max_examples = 0;
  // grad-check / grad-probe
  bool inject_bug = false;
  std::string probe_mode = "random";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

CellKind require_cell(const std::string& name) {
  if (auto k = parse_cell_kind(name)) return *k;
  throw UsageError("unknown cell '" + name + "'; valid cells are " + std::string(kCellChoices));
}

OptimizerKind require_optimizer(const std::string& name) {
  if (auto k = parse_optimizer_kind(name)) return *k;
  throw UsageError("unknown optimizer '" + name + "'; valid optimizers are {rmsprop,adam}");
}

void add_model_flags(CLI::App* cmd, RunSpec& s) {
  cmd->add_option("--cell", s.cell, "Recurrent cell " + std::string(kCellChoices))
      ->capture_default_str();
  cmd->add_flag("--tfc", s.tfc, "Wrap the cell with the t-2 -> t gated skip connection");
  cmd->add_option("--hidden", s.hidden, "Hidden state size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--layers", s.layers, "Stacked recurrent layers")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", s.seed, "Random seed")->capture_default_str();
}

void add_training_flags(CLI::App* cmd, RunSpec& s) {
  cmd->add_option("--batch", s.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", s.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--out", s.out, "Output CSV path");
}

int train_synthetic(TaskKind task, const RunSpec& s, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  cfg.learning_rate = s.lr;
  cfg.decay_rate = s.decay;
  cfg.batch_size = s.batch;
  cfg.max_steps = s.max_steps;
  cfg.seed = s.seed;
  cfg.optimizer = require_optimizer(s.optimizer);
  cfg.grad_clip = s.grad_clip;
  cfg.eval_every = s.eval_every;
  cfg.stop_at_crossing = s.stop_at_crossing;
  const CellKind kind = require_cell(s.cell);
  if (task == TaskKind::Denoise && s.time_steps < kAnswerLength) {
    throw UsageError("denoise needs --time-steps >= 10");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  if (!s.dump.empty()) {
    Rng dump_rng(s.seed);
    std::ofstream d(s.dump);
    if (!d) throw UsageError("cannot write " + s.dump);
    dump_batch(d, gen_task(task, s.time_steps, std::min<std::size_t>(s.batch, 8), dump_rng));
  }

  Rng init_rng(s.seed);
  ModelSpec spec;
  spec.kind = kind;
  spec.tfc = s.tfc;
  spec.input_size = task == TaskKind::Copy ? copy_task::kInputSymbols : denoise_task::kInputSymbols;
  spec.num_classes = task == TaskKind::Copy ? copy_task::kOutputClasses : denoise_task::kOutputClasses;
  spec.hidden_size = s.hidden;
  spec.layers = s.layers;
  SequenceModel model = make_model(spec, init_rng);

  err << "# task=" << task_name(task) << " cell=" << babi::cell_label(kind, s.tfc)
      << " T=" << s.time_steps << " hidden=" << s.hidden << " layers=" << s.layers
      << " batch=" << s.batch << " lr=" << format_real(s.lr) << " decay=" << format_real(s.decay)
      << " optimizer=" << s.optimizer << " seed=" << s.seed
      << " grad_clip=" << (s.grad_clip ? format_real(*s.grad_clip) : std::string("off")) << '\n';

  TrainLog log;
  try {
    log = train_task(model, task, s.time_steps, cfg);
  } catch (const NumericAbort& e) {
    err << e.what() << '\n';
    return kNumericAbort;
  }
  if (s.out.empty()) {
    log.write_csv(out);
  } else {
    std::ofstream f(s.out);
    if (!f) throw UsageError("cannot write " + s.out);
    log.write_csv(f);
  }
  err << log.summary() << '\n';
  return kOk;
}

int grad_check(const RunSpec& s, std::ostream& out) {
  bool all_pass = true;
  bool first = true;
  for (CellKind kind : {CellKind::VanillaRNN, CellKind::GRU, CellKind::LSTM, CellKind::SGRU}) {
    for (bool tfc : {false, true}) {
      // The injected fault lands on the first configuration only.
      const auto r = run_gradient_check({kind, tfc, s.layers}, s.seed, s.inject_bug && first);
      first = false;
      all_pass = all_pass && r.passed;
      out << "cell=" << cell_name(kind) << " tfc=" << (tfc ? 1 : 0) << " layers=" << s.layers
          << " max_rel_err=" << format_real(r.comparison.max_relative_error)
          << " worst=" << r.comparison.worst_parameter << '[' << r.comparison.worst_index << ']'
          << " analytic=" << format_real(r.comparison.worst_analytic)
          << " numeric=" << format_real(r.comparison.worst_numeric) << ' '
          << (r.passed ? "PASS" : "FAIL") << '\n';
    }
  }
  out << (all_pass ? "all configurations within " : "gradient mismatch above ")
      << format_real(kGradCheckTolerance) << '\n';
  return all_pass ? kOk : kNumericAbort;
}

int grad_probe(const RunSpec& s, std::ostream& out) {
  if (s.time_steps < 2) throw UsageError("grad-probe needs --time-steps >= 2");
  const CellKind kind = require_cell(s.cell);
  constexpr std::size_t kProbeInput = copy_task::kInputSymbols;
  Rng rng(s.seed);
  CellParams vanilla = init_params(CellKind::VanillaRNN, kProbeInput, s.hidden, false, rng);
  CellParams wrapped = init_params(kind, kProbeInput, s.hidden, true, rng);
  if (s.probe_mode == "closed-form") {
    // Linear recurrence with V = 0.5 I, and a carry gate pinned shut.
    vanilla.activation = Activation::Identity;
    vanilla.gates[gate::kRnn].V = scale(identity(s.hidden), 0.5);
    wrapped.carry->W.fill(0.0);
    wrapped.carry->V.fill(0.0);
    wrapped.carry->b.fill(-30.0);
  } else if (s.probe_mode != "random") {
    throw UsageError("--probe-mode must be random or closed-form");
  }
  Rng run_vanilla(s.seed + 1), run_wrapped(s.seed + 1);
  const auto a = gradient_probe(vanilla, s.time_steps, run_vanilla);
  const auto b = gradient_probe(wrapped, s.time_steps, run_wrapped);

  std::ostringstream csv;
  csv << "k,norm_vanilla,norm_tfc\n";
  for (std::size_t k = 1; k < s.time_steps; ++k) {
    csv << k << ',' << format_real(a[k - 1]) << ',' << format_real(b[k - 1]) << '\n';
  }
  if (s.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(s.out);
    if (!f) throw UsageError("cannot write " + s.out);
    f << csv.str();
  }
  return kOk;
}

int train_babi(const RunSpec& s, std::ostream& out, std::ostream& err) {
  if (s.all == (s.task != 0)) throw UsageError("train-babi needs exactly one of --task N or --all");
  if (!s.all && (s.task < 1 || s.task > babi::kTaskCount)) {
    throw UsageError("--task must be in 1..20, got " + std::to_string(s.task));
  }
  std::string dir = s.babi_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("BABI_DIR")) dir = env;
  }
  if (dir.empty()) {
    err << "no bAbI directory: pass --babi-dir or set BABI_DIR\n";
    return kMissingData;
  }
  babi::BabiConfig cfg;
  cfg.cell = require_cell(s.cell);
  cfg.tfc = s.tfc;
  cfg.hidden = s.hidden;
  cfg.layers = s.layers;
  cfg.embedding = s.embedding;
  cfg.batch = s.batch;
  cfg.learning_rate = s.lr;
  cfg.epochs = s.epochs;
  cfg.seed = s.seed;
  cfg.max_train_examples = s.max_examples;
  if (s.optimizer != "adam") err << "# note: bAbI training always uses adam\n";

  babi::ResultTable table;
  bool missing = false;
  if (s.all) {
    table = babi::run_all_tasks(dir, cfg);
    for (const auto& r : table.rows) {
      if (!r.accuracy) {
        err << "task " << r.task_id << " failed: " << r.error << '\n';
        missing = missing || r.error.find("missing bAbI") != std::string::npos;
      }
    }
  } else {
    try {
      table.rows.push_back(babi::run_task(dir, s.task, cfg));
    } catch (const babi::DataError& e) {
      err << e.what() << '\n';
      return kMissingData;
    }
  }
  for (const auto& r : table.rows) {
    if (!r.accuracy) continue;
    out << "task=" << r.task_id << " cell=" << r.cell << " accuracy=" << format_real(*r.accuracy)
        << " majority=" << format_real(r.majority) << " train_size=" << r.train_size
        << " test_size=" << r.test_size << '\n';
  }
  table.write_report(err);

  const std::string path = s.out.empty() ? "babi_results.csv" : s.out;
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path);
  table.write_csv(f);
  return missing ? kMissingData : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recurrent network laboratory: gated skip connections, single-gate cells, BPTT"};
  app.require_subcommand(1);
  RunSpec s;  // train-copy / train-denoise
  RunSpec bs;
  bs.hidden = 40;
  bs.layers = 2;
  bs.optimizer = "adam";
  RunSpec cs;
  RunSpec ps;
  ps.hidden = 16;
  ps.time_steps = 50;

  auto* copy = app.add_subcommand("train-copy", "Train on the memory copying task");
  auto* denoise = app.add_subcommand("train-denoise", "Train on the denoise task");
  for (auto* cmd : {copy, denoise}) {
    add_model_flags(cmd, s);
    add_training_flags(cmd, s);
    cmd->add_option("--time-steps", s.time_steps, "Delay T; sequences have length T+20")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--decay", s.decay, "RMSProp decay rate")->capture_default_str();
    cmd->add_option("--optimizer", s.optimizer, "rmsprop or adam")->capture_default_str();
    cmd->add_option("--max-steps", s.max_steps, "Training steps")->capture_default_str();
    cmd->add_option("--grad-clip", s.grad_clip, "Global gradient norm threshold (off by default)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--eval-every", s.eval_every, "Steps between CSV rows")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_flag("--stop-at-crossing", s.stop_at_crossing, "Stop once loss drops below baseline");
    cmd->add_option("--dump", s.dump, "Write a few generated sequences as text to this path");
  }

  auto* babi_cmd = app.add_subcommand("train-babi", "Train and evaluate on bAbI subtasks");
  add_model_flags(babi_cmd, bs);
  add_training_flags(babi_cmd, bs);
  babi_cmd->add_option("--task", bs.task, "Subtask id 1..20");
  babi_cmd->add_flag("--all", bs.all, "Run all 20 subtasks");
  babi_cmd->add_option("--babi-dir", bs.babi_dir, "Directory with qa<N>_*_{train,test}.txt (or BABI_DIR)");
  babi_cmd->add_option("--epochs", bs.epochs, "Epochs per subtask")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  babi_cmd->add_option("--embedding", bs.embedding, "Word embedding size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  babi_cmd->add_option("--optimizer", bs.optimizer, "Optimizer (adam)");
  babi_cmd->add_option("--max-examples", bs.max_examples, "Use only the first N training examples");

  auto* check = app.add_subcommand("grad-check", "Compare BPTT gradients with finite differences");
  check->add_option("--layers", cs.layers, "Stacked layers")->check(CLI::PositiveNumber)->capture_default_str();
  check->add_option("--seed", cs.seed, "Random seed")->capture_default_str();
  check->add_flag("--inject-bug", cs.inject_bug, "Perturb one analytic gradient (harness self-test)");

  auto* probe = app.add_subcommand("grad-probe", "Jacobian norms ||dh^T/dh^k|| across time");
  probe->add_option("--cell", ps.cell, "Cell inside the skip wrapper " + std::string(kCellChoices))
      ->capture_default_str();
  probe->add_option("--time-steps", ps.time_steps, "T")->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--hidden", ps.hidden, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--seed", ps.seed, "Random seed")->capture_default_str();
  probe->add_option("--out", ps.out, "Output CSV path");
  probe->add_option("--probe-mode", ps.probe_mode,
                    "random: Glorot tanh RNN vs wrapped cell; closed-form: linear V=0.5I vs shut carry gate")
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (copy->parsed()) return train_synthetic(TaskKind::Copy, s, out, err);
    if (denoise->parsed()) return train_synthetic(TaskKind::Denoise, s, out, err);
    if (babi_cmd->parsed()) return train_babi(bs, out, err);
    if (check->parsed()) return grad_check(cs, out);
    if (probe->parsed()) return grad_probe(ps, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericAbort& e) {
    err << e.what() << '\n';
    return kNumericAbort;
  } catch (const babi::DataError& e) {
    err << e.what() << '\n';
    return kMissingData;
  }
  return kUsage;
}

}  // namespace rnnlab::cli
