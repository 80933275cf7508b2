// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

namespace rnnlab {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(decay_rate > 0.0 && decay_rate < 1.0)) throw std::invalid_argument("decay_rate must lie in (0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be > 0");
}

std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

void TrainLog::write_csv(std::ostream& os) const {
  os << "step,loss,baseline,wall_ms\n";
  for (const auto& r : records) {
    os << r.step << ',' << format_real(r.loss) << ',' << format_real(r.baseline) << ','
       << format_real(std::round(r.wall_ms * 1000.0) / 1000.0) << '\n';
  }
}

std::string TrainLog::summary() const {
  std::ostringstream os;
  os << "crossed_baseline_at=" << (crossed_at ? std::to_string(*crossed_at) : std::string("never"))
     << " final_loss=" << format_real(final_loss) << " baseline=" << format_real(baseline);
  return os.str();
}

NumericAbort::NumericAbort(std::size_t step, const std::string& detail)
    : std::runtime_error("numeric abort at step " + std::to_string(step) + ": " + detail),
      step_(step) {}

namespace {

std::string gradient_report(const GradientSet& grads) {
  std::ostringstream os;
  os << "gradient norms:";
  grads.for_each([&](const std::string& name, const Matrix& g) {
    os << ' ' << name << '=' << format_real(frobenius_norm(g));
  });
  return os.str();
}

}  // namespace

TrainLog train_task(SequenceModel& model, TaskKind task, std::size_t T, const TrainConfig& cfg,
                    const StepCallback& on_record) {
  cfg.validate();
  TrainLog log;
  log.baseline = baseline(task, T);
  // Data stream is independent of whatever stream initialized the model.
  Rng data_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.decay_rate);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    const TaskBatch batch = gen_task(task, T, cfg.batch_size, data_rng);
    LossAndGradients lg = bptt_gradients(model, batch);
    auto grads = parameter_list(lg.grads);
    const double norm = global_norm(std::vector<const Matrix*>(grads.begin(), grads.end()));
    if (!std::isfinite(lg.loss) || !std::isfinite(norm)) {
      throw NumericAbort(step, "loss=" + format_real(lg.loss) + " " + gradient_report(lg.grads));
    }
    if (cfg.grad_clip) clip_global_norm(grads, *cfg.grad_clip);
    opt.step(model, lg.grads);

    log.steps_run = step;
    log.final_loss = lg.loss;
    if (!log.crossed_at && lg.loss < log.baseline) log.crossed_at = step;

    const bool last = step == cfg.max_steps || (cfg.stop_at_crossing && log.crossed_at);
    if (step % cfg.eval_every == 0 || last) {
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      log.records.push_back({step, lg.loss, log.baseline, ms});
      if (on_record) on_record(log.records.back());
    }
    if (cfg.stop_at_crossing && log.crossed_at) break;
  }
  return log;
}

}  // namespace rnnlab
