// SPDX-License-Identifier: Apache-2.0
//
// Recurrent cell step functions with hand-derived backward passes.
//
// Every cell is a stack of "gate blocks", each an affine map
//     a = x W^T + h V^T + b,   W: (d_h x d_x), V: (d_h x d_h), b: (1 x d_h)
// followed by a nonlinearity. Inputs and states are row-batched: x is
// (batch x d_x), h is (batch x d_h).
//
//   rnn   h' = f(a)                                    f = tanh or identity
//   gru   z = sig(a_z), r = sig(a_r)
//         c = tanh(x W_h^T + (r*h) V_h^T + b_h)
//         h' = (1 - z)*h + z*c
//   sgru  r = sig(a_r)
//         c = tanh(x W^T + (r*h) V^T + b)
//         h' = (1 - r)*h + r*c                          single gate
//   lstm  i, f, o = sig(.), g = tanh(.)
//         c' = f*c + i*g,  h' = o*tanh(c')
//
// The time-feedforward wrapper mixes the inner output y with the state two
// steps back:
//   s  = sig(x W_H^T + h2 V_H^T + b_H)
//   h' = y*s + h2*(1 - s)
// where h2 is h^{t-2}; h^{-1} = h^0 = 0.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab {

enum class CellKind { VanillaRNN, GRU, LSTM, SGRU };

/// Activation of the vanilla cell. Identity exists for closed-form Jacobian checks.
enum class Activation { Tanh, Identity };

/// Short CLI name: rnn, gru, lstm, sgru.
std::string_view cell_name(CellKind kind);
/// Inverse of cell_name; std::nullopt for anything outside the closed set.
std::optional<CellKind> parse_cell_kind(std::string_view name);
std::size_t gate_block_count(CellKind kind);
/// Names of the gate blocks in storage order, e.g. {"z", "r", "h"} for GRU.
std::vector<std::string> gate_block_names(CellKind kind);

// Gate block indices per kind.
namespace gate {
inline constexpr std::size_t kRnn = 0;
inline constexpr std::size_t kGruUpdate = 0, kGruReset = 1, kGruCandidate = 2;
inline constexpr std::size_t kSgruReset = 0, kSgruCandidate = 1;
inline constexpr std::size_t kLstmInput = 0, kLstmForget = 1, kLstmOutput = 2,
                             kLstmCandidate = 3;
}  // namespace gate

struct GateBlock {
  Matrix W;  // d_h x d_x
  Matrix V;  // d_h x d_h
  Matrix b;  // 1 x d_h

  static GateBlock zeros(std::size_t d_x, std::size_t d_h);
};

struct CellParams {
  CellKind kind = CellKind::VanillaRNN;
  Activation activation = Activation::Tanh;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::vector<GateBlock> gates;
  std::optional<GateBlock> carry;  // present iff time-feedforward wrapped

  bool tfc() const noexcept { return carry.has_value(); }
  /// Same layout, every entry zero. Used as a gradient accumulator.
  CellParams zeros_like() const;
  /// Visits (name, matrix) for every parameter tensor in storage order.
  template <typename Fn>
  void for_each(Fn&& fn);
  template <typename Fn>
  void for_each(Fn&& fn) const;
};

CellParams init_params(CellKind kind, std::size_t d_x, std::size_t d_h, bool with_tfc, Rng& rng);
std::size_t param_count(CellKind kind, std::size_t d_x, std::size_t d_h, bool with_tfc);
std::size_t param_count(const CellParams& params);

struct CellState {
  Matrix h;        // h^{t-1}
  Matrix c;        // LSTM memory; empty otherwise
  Matrix h_prev2;  // h^{t-2}; empty unless TFC

  static CellState zeros(const CellParams& params, std::size_t batch);
};

/// Everything a backward step needs from its forward step.
struct StepCache {
  CellKind kind = CellKind::VanillaRNN;
  bool tfc = false;
  Matrix x;
  Matrix h_prev;
  Matrix c_prev;
  Matrix h_prev2;
  std::vector<Matrix> acts;  // post-nonlinearity gate values in gate-block order
  Matrix reset_h;            // r*h for GRU/SGRU
  Matrix tanh_c;             // tanh(c') for LSTM
  Matrix y;                  // inner cell output (equals h' without TFC)
  Matrix s;                  // carry gate
};

struct StepResult {
  CellState state;
  StepCache cache;
};

StepResult rnn_step(const CellParams& params, const Matrix& x, const CellState& state);
StepResult gru_step(const CellParams& params, const Matrix& x, const CellState& state);
StepResult sgru_step(const CellParams& params, const Matrix& x, const CellState& state);
StepResult lstm_step(const CellParams& params, const Matrix& x, const CellState& state);
/// Runs the inner cell named by params.kind, then applies the carry gate.
StepResult tfc_step(const CellParams& params, const Matrix& x, const CellState& state);
/// Dispatches to tfc_step when params carry a gate, else to the plain cell.
StepResult cell_step(const CellParams& params, const Matrix& x, const CellState& state);

/// Gradients arriving at the outputs of one step. Empty matrices mean zero.
struct StepUpstream {
  Matrix grad_h;        // dL/dh^t
  Matrix grad_c;        // dL/dc^t (LSTM)
  Matrix grad_h_prev2;  // dL/d(state'.h_prev2), i.e. the skip gradient on h^{t-1}
};

struct StepGradients {
  Matrix grad_x;
  Matrix grad_h_prev;   // dL/dh^{t-1}, including the pass-through of grad_h_prev2
  Matrix grad_c_prev;   // empty unless LSTM
  Matrix grad_h_prev2;  // dL/dh^{t-2}; empty unless TFC
};

/// Backward pass of one step. Parameter gradients are accumulated into
/// `grads`, which must have the layout of `params`.
StepGradients backward_step(const CellParams& params, const StepCache& cache,
                            const StepUpstream& upstream, CellParams& grads);

// ---------------------------------------------------------------------------

template <typename Fn>
void CellParams::for_each(Fn&& fn) {
  const auto names = gate_block_names(kind);
  for (std::size_t g = 0; g < gates.size(); ++g) {
    fn("W_" + names[g], gates[g].W);
    fn("V_" + names[g], gates[g].V);
    fn("b_" + names[g], gates[g].b);
  }
  if (carry) {
    fn(std::string("W_H"), carry->W);
    fn(std::string("V_H"), carry->V);
    fn(std::string("b_H"), carry->b);
  }
}

template <typename Fn>
void CellParams::for_each(Fn&& fn) const {
  const_cast<CellParams*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

}  // namespace rnnlab
