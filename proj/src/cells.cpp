// SPDX-License-Identifier: Apache-2.0

#include "rnnlab/cells.hpp"

#include <cmath>
#include <stdexcept>

namespace rnnlab {

namespace {

// x W^T + h V^T + b
Matrix affine(const GateBlock& g, const Matrix& x, const Matrix& h) {
  Matrix a = matmul_nt(x, g.W);
  add_matmul_nt(a, h, g.V);
  add_row_inplace(a, g.b);
  return a;
}

// Accumulates the gradients of an affine gate block given dL/da.
void affine_backward(const GateBlock& g, GateBlock& dg, const Matrix& x, const Matrix& h,
                     const Matrix& da, Matrix& dx, Matrix& dh) {
  add_matmul_tn(dg.W, da, x);
  add_matmul_tn(dg.V, da, h);
  add_column_sums(dg.b, da);
  add_matmul(dx, da, g.W);
  add_matmul(dh, da, g.V);
}

void apply_sigmoid(Matrix& a) {
  for (double& v : a.flat()) v = sigmoid(v);
}

void apply_tanh(Matrix& a) {
  for (double& v : a.flat()) v = std::tanh(v);
}

void check_step_inputs(const CellParams& p, const Matrix& x, const CellState& s) {
  if (x.cols() != p.input_size) {
    throw ShapeError("cell step: input " + x.shape_string() + " but cell expects " +
                     std::to_string(p.input_size) + " features");
  }
  if (s.h.rows() != x.rows() || s.h.cols() != p.hidden_size) {
    throw ShapeError("cell step: hidden state " + s.h.shape_string() + " incompatible with input " +
                     x.shape_string() + " and hidden size " + std::to_string(p.hidden_size));
  }
  if (p.kind == CellKind::LSTM && !s.c.same_shape(s.h)) {
    throw ShapeError("lstm step: memory state " + s.c.shape_string() + " vs hidden " +
                     s.h.shape_string());
  }
}

void require_kind(const CellParams& p, CellKind k, const char* op) {
  if (p.kind != k) {
    throw std::invalid_argument(std::string(op) + ": params are for cell '" +
                                std::string(cell_name(p.kind)) + "'");
  }
}

// (1 - g) * h + g * c, the interpolation shared by GRU and SGRU.
Matrix interpolate(const Matrix& gate, const Matrix& h, const Matrix& cand) {
  Matrix out(h.rows(), h.cols());
  const double* pg = gate.data();
  const double* ph = h.data();
  const double* pc = cand.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = (1.0 - pg[i]) * ph[i] + pg[i] * pc[i];
  return out;
}

StepResult inner_step(const CellParams& p, const Matrix& x, const CellState& state) {
  switch (p.kind) {
    case CellKind::VanillaRNN: return rnn_step(p, x, state);
    case CellKind::GRU: return gru_step(p, x, state);
    case CellKind::SGRU: return sgru_step(p, x, state);
    case CellKind::LSTM: return lstm_step(p, x, state);
  }
  throw std::logic_error("unreachable cell kind");
}

// Backward through the inner cell given dL/dy and dL/dc'. Writes dx, dh, dc.
void inner_backward(const CellParams& p, const StepCache& k, const Matrix& dy, const Matrix& dc_in,
                    CellParams& grads, StepGradients& out) {
  const std::size_t n = dy.size();
  switch (p.kind) {
    case CellKind::VanillaRNN: {
      Matrix da(dy.rows(), dy.cols());
      const double* py = k.acts[gate::kRnn].data();
      for (std::size_t i = 0; i < n; ++i) {
        const double fp = p.activation == Activation::Tanh ? 1.0 - py[i] * py[i] : 1.0;
        da.data()[i] = dy.data()[i] * fp;
      }
      affine_backward(p.gates[gate::kRnn], grads.gates[gate::kRnn], k.x, k.h_prev, da, out.grad_x,
                      out.grad_h_prev);
      break;
    }
    case CellKind::GRU: {
      const Matrix& z = k.acts[gate::kGruUpdate];
      const Matrix& r = k.acts[gate::kGruReset];
      const Matrix& c = k.acts[gate::kGruCandidate];
      Matrix dz(dy.rows(), dy.cols()), dc(dy.rows(), dy.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dy.data()[i];
        const double zi = z.data()[i];
        const double ci = c.data()[i];
        dc.data()[i] = g * zi * (1.0 - ci * ci);
        dz.data()[i] = g * (ci - k.h_prev.data()[i]) * zi * (1.0 - zi);
        out.grad_h_prev.data()[i] += g * (1.0 - zi);
      }
      // Candidate sees (r*h) in place of h.
      Matrix d_reset_h(dy.rows(), dy.cols());
      affine_backward(p.gates[gate::kGruCandidate], grads.gates[gate::kGruCandidate], k.x,
                      k.reset_h, dc, out.grad_x, d_reset_h);
      Matrix dr(dy.rows(), dy.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const double ri = r.data()[i];
        dr.data()[i] = d_reset_h.data()[i] * k.h_prev.data()[i] * ri * (1.0 - ri);
        out.grad_h_prev.data()[i] += d_reset_h.data()[i] * ri;
      }
      affine_backward(p.gates[gate::kGruUpdate], grads.gates[gate::kGruUpdate], k.x, k.h_prev, dz,
                      out.grad_x, out.grad_h_prev);
      affine_backward(p.gates[gate::kGruReset], grads.gates[gate::kGruReset], k.x, k.h_prev, dr,
                      out.grad_x, out.grad_h_prev);
      break;
    }
    case CellKind::SGRU: {
      const Matrix& r = k.acts[gate::kSgruReset];
      const Matrix& c = k.acts[gate::kSgruCandidate];
      Matrix dc(dy.rows(), dy.cols());
      Matrix dr_interp(dy.rows(), dy.cols());  // dL/dr through the interpolation
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dy.data()[i];
        const double ri = r.data()[i];
        const double ci = c.data()[i];
        dc.data()[i] = g * ri * (1.0 - ci * ci);
        dr_interp.data()[i] = g * (ci - k.h_prev.data()[i]);
        out.grad_h_prev.data()[i] += g * (1.0 - ri);
      }
      Matrix d_reset_h(dy.rows(), dy.cols());
      affine_backward(p.gates[gate::kSgruCandidate], grads.gates[gate::kSgruCandidate], k.x,
                      k.reset_h, dc, out.grad_x, d_reset_h);
      Matrix da_r(dy.rows(), dy.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const double ri = r.data()[i];
        const double dr = dr_interp.data()[i] + d_reset_h.data()[i] * k.h_prev.data()[i];
        da_r.data()[i] = dr * ri * (1.0 - ri);
        out.grad_h_prev.data()[i] += d_reset_h.data()[i] * ri;
      }
      affine_backward(p.gates[gate::kSgruReset], grads.gates[gate::kSgruReset], k.x, k.h_prev,
                      da_r, out.grad_x, out.grad_h_prev);
      break;
    }
    case CellKind::LSTM: {
      const Matrix& ig = k.acts[gate::kLstmInput];
      const Matrix& fg = k.acts[gate::kLstmForget];
      const Matrix& og = k.acts[gate::kLstmOutput];
      const Matrix& gg = k.acts[gate::kLstmCandidate];
      Matrix di(dy.rows(), dy.cols()), df(dy.rows(), dy.cols()), dout(dy.rows(), dy.cols()),
          dg(dy.rows(), dy.cols());
      out.grad_c_prev = Matrix(dy.rows(), dy.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dy.data()[i];
        const double tc = k.tanh_c.data()[i];
        const double oi = og.data()[i], ii = ig.data()[i], fi = fg.data()[i], gi = gg.data()[i];
        const double dct = (dc_in.empty() ? 0.0 : dc_in.data()[i]) + g * oi * (1.0 - tc * tc);
        dout.data()[i] = g * tc * oi * (1.0 - oi);
        di.data()[i] = dct * gi * ii * (1.0 - ii);
        df.data()[i] = dct * k.c_prev.data()[i] * fi * (1.0 - fi);
        dg.data()[i] = dct * ii * (1.0 - gi * gi);
        out.grad_c_prev.data()[i] = dct * fi;
      }
      affine_backward(p.gates[gate::kLstmInput], grads.gates[gate::kLstmInput], k.x, k.h_prev, di,
                      out.grad_x, out.grad_h_prev);
      affine_backward(p.gates[gate::kLstmForget], grads.gates[gate::kLstmForget], k.x, k.h_prev,
                      df, out.grad_x, out.grad_h_prev);
      affine_backward(p.gates[gate::kLstmOutput], grads.gates[gate::kLstmOutput], k.x, k.h_prev,
                      dout, out.grad_x, out.grad_h_prev);
      affine_backward(p.gates[gate::kLstmCandidate], grads.gates[gate::kLstmCandidate], k.x,
                      k.h_prev, dg, out.grad_x, out.grad_h_prev);
      break;
    }
  }
}

}  // namespace

std::string_view cell_name(CellKind kind) {
  switch (kind) {
    case CellKind::VanillaRNN: return "rnn";
    case CellKind::GRU: return "gru";
    case CellKind::LSTM: return "lstm";
    case CellKind::SGRU: return "sgru";
  }
  return "?";
}

std::optional<CellKind> parse_cell_kind(std::string_view name) {
  for (CellKind k : {CellKind::VanillaRNN, CellKind::GRU, CellKind::LSTM, CellKind::SGRU}) {
    if (cell_name(k) == name) return k;
  }
  return std::nullopt;
}

std::size_t gate_block_count(CellKind kind) { return gate_block_names(kind).size(); }

std::vector<std::string> gate_block_names(CellKind kind) {
  switch (kind) {
    case CellKind::VanillaRNN: return {"h"};
    case CellKind::GRU: return {"z", "r", "h"};
    case CellKind::SGRU: return {"r", "h"};
    case CellKind::LSTM: return {"i", "f", "o", "c"};
  }
  return {};
}

GateBlock GateBlock::zeros(std::size_t d_x, std::size_t d_h) {
  return {Matrix(d_h, d_x), Matrix(d_h, d_h), Matrix(1, d_h)};
}

CellParams CellParams::zeros_like() const {
  CellParams out = *this;
  out.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

CellParams init_params(CellKind kind, std::size_t d_x, std::size_t d_h, bool with_tfc, Rng& rng) {
  if (d_x == 0 || d_h == 0) throw std::invalid_argument("init_params: dimensions must be >= 1");
  auto block = [&] {
    return GateBlock{glorot_init(d_h, d_x, rng), glorot_init(d_h, d_h, rng), Matrix(1, d_h)};
  };
  CellParams p;
  p.kind = kind;
  p.input_size = d_x;
  p.hidden_size = d_h;
  for (std::size_t g = 0; g < gate_block_count(kind); ++g) p.gates.push_back(block());
  if (with_tfc) p.carry = block();
  return p;
}

std::size_t param_count(CellKind kind, std::size_t d_x, std::size_t d_h, bool with_tfc) {
  const std::size_t per_block = d_h * d_x + d_h * d_h + d_h;
  return (gate_block_count(kind) + (with_tfc ? 1 : 0)) * per_block;
}

std::size_t param_count(const CellParams& params) {
  std::size_t n = 0;
  params.for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

CellState CellState::zeros(const CellParams& params, std::size_t batch) {
  CellState s;
  s.h = Matrix(batch, params.hidden_size);
  if (params.kind == CellKind::LSTM) s.c = Matrix(batch, params.hidden_size);
  if (params.tfc()) s.h_prev2 = Matrix(batch, params.hidden_size);
  return s;
}

StepResult rnn_step(const CellParams& p, const Matrix& x, const CellState& state) {
  require_kind(p, CellKind::VanillaRNN, "rnn_step");
  check_step_inputs(p, x, state);
  Matrix a = affine(p.gates[gate::kRnn], x, state.h);
  if (p.activation == Activation::Tanh) apply_tanh(a);
  StepResult res;
  res.cache.kind = p.kind;
  res.cache.x = x;
  res.cache.h_prev = state.h;
  res.cache.y = a;
  res.cache.acts.push_back(std::move(a));
  res.state.h = res.cache.y;
  return res;
}

StepResult gru_step(const CellParams& p, const Matrix& x, const CellState& state) {
  require_kind(p, CellKind::GRU, "gru_step");
  check_step_inputs(p, x, state);
  Matrix z = affine(p.gates[gate::kGruUpdate], x, state.h);
  Matrix r = affine(p.gates[gate::kGruReset], x, state.h);
  apply_sigmoid(z);
  apply_sigmoid(r);
  Matrix reset_h = hadamard(r, state.h);
  Matrix c = affine(p.gates[gate::kGruCandidate], x, reset_h);
  apply_tanh(c);
  StepResult res;
  res.cache.kind = p.kind;
  res.cache.x = x;
  res.cache.h_prev = state.h;
  res.cache.y = interpolate(z, state.h, c);
  res.cache.reset_h = std::move(reset_h);
  res.cache.acts = {std::move(z), std::move(r), std::move(c)};
  res.state.h = res.cache.y;
  return res;
}

StepResult sgru_step(const CellParams& p, const Matrix& x, const CellState& state) {
  require_kind(p, CellKind::SGRU, "sgru_step");
  check_step_inputs(p, x, state);
  Matrix r = affine(p.gates[gate::kSgruReset], x, state.h);
  apply_sigmoid(r);
  Matrix reset_h = hadamard(r, state.h);
  Matrix c = affine(p.gates[gate::kSgruCandidate], x, reset_h);
  apply_tanh(c);
  StepResult res;
  res.cache.kind = p.kind;
  res.cache.x = x;
  res.cache.h_prev = state.h;
  // The reset gate doubles as the interpolation gate.
  res.cache.y = interpolate(r, state.h, c);
  res.cache.reset_h = std::move(reset_h);
  res.cache.acts = {std::move(r), std::move(c)};
  res.state.h = res.cache.y;
  return res;
}

StepResult lstm_step(const CellParams& p, const Matrix& x, const CellState& state) {
  require_kind(p, CellKind::LSTM, "lstm_step");
  check_step_inputs(p, x, state);
  Matrix i = affine(p.gates[gate::kLstmInput], x, state.h);
  Matrix f = affine(p.gates[gate::kLstmForget], x, state.h);
  Matrix o = affine(p.gates[gate::kLstmOutput], x, state.h);
  Matrix g = affine(p.gates[gate::kLstmCandidate], x, state.h);
  apply_sigmoid(i);
  apply_sigmoid(f);
  apply_sigmoid(o);
  apply_tanh(g);
  Matrix c(x.rows(), p.hidden_size), tc(x.rows(), p.hidden_size), h(x.rows(), p.hidden_size);
  for (std::size_t k = 0; k < c.size(); ++k) {
    c.data()[k] = f.data()[k] * state.c.data()[k] + i.data()[k] * g.data()[k];
    tc.data()[k] = std::tanh(c.data()[k]);
    h.data()[k] = o.data()[k] * tc.data()[k];
  }
  StepResult res;
  res.cache.kind = p.kind;
  res.cache.x = x;
  res.cache.h_prev = state.h;
  res.cache.c_prev = state.c;
  res.cache.tanh_c = std::move(tc);
  res.cache.acts = {std::move(i), std::move(f), std::move(o), std::move(g)};
  res.cache.y = h;
  res.state.h = std::move(h);
  res.state.c = std::move(c);
  return res;
}

StepResult tfc_step(const CellParams& p, const Matrix& x, const CellState& state) {
  if (!p.carry) throw std::invalid_argument("tfc_step: params have no carry gate");
  if (!state.h_prev2.same_shape(state.h)) {
    throw ShapeError("tfc_step: h_prev2 " + state.h_prev2.shape_string() + " vs h " +
                     state.h.shape_string());
  }
  StepResult res = inner_step(p, x, state);
  Matrix s = affine(*p.carry, x, state.h_prev2);
  apply_sigmoid(s);
  Matrix h(x.rows(), p.hidden_size);
  const double* py = res.cache.y.data();
  const double* ps = s.data();
  const double* p2 = state.h_prev2.data();
  for (std::size_t k = 0; k < h.size(); ++k) h.data()[k] = py[k] * ps[k] + p2[k] * (1.0 - ps[k]);
  res.cache.tfc = true;
  res.cache.h_prev2 = state.h_prev2;
  res.cache.s = std::move(s);
  res.state.h = std::move(h);
  res.state.h_prev2 = state.h;
  return res;
}

StepResult cell_step(const CellParams& p, const Matrix& x, const CellState& state) {
  return p.tfc() ? tfc_step(p, x, state) : inner_step(p, x, state);
}

StepGradients backward_step(const CellParams& p, const StepCache& k, const StepUpstream& up,
                            CellParams& grads) {
  if (k.kind != p.kind || k.tfc != p.tfc()) {
    throw std::invalid_argument("backward_step: cache was produced by a different cell");
  }
  if (!up.grad_h.same_shape(k.h_prev)) {
    throw ShapeError("backward_step: upstream grad_h " + up.grad_h.shape_string() +
                     " vs state " + k.h_prev.shape_string());
  }
  const std::size_t rows = k.h_prev.rows();
  const std::size_t d_h = p.hidden_size;
  StepGradients out;
  out.grad_x = Matrix(rows, p.input_size);
  out.grad_h_prev = Matrix(rows, d_h);
  if (!up.grad_h_prev2.empty()) add_inplace(out.grad_h_prev, up.grad_h_prev2);

  if (!k.tfc) {
    inner_backward(p, k, up.grad_h, up.grad_c, grads, out);
    return out;
  }

  // h = y*s + h2*(1-s)
  Matrix dy(rows, d_h), da_s(rows, d_h);
  out.grad_h_prev2 = Matrix(rows, d_h);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double g = up.grad_h.data()[i];
    const double si = k.s.data()[i];
    dy.data()[i] = g * si;
    da_s.data()[i] = g * (k.y.data()[i] - k.h_prev2.data()[i]) * si * (1.0 - si);
    out.grad_h_prev2.data()[i] = g * (1.0 - si);
  }
  affine_backward(*p.carry, *grads.carry, k.x, k.h_prev2, da_s, out.grad_x, out.grad_h_prev2);
  inner_backward(p, k, dy, up.grad_c, grads, out);
  return out;
}

}  // namespace rnnlab
