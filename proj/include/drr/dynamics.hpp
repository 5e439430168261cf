// Copyright 2026 The DRR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Review-sequence dynamics: per-event embedding of (time, gap, hashed rating),
// the recurrent state update, and the exponential arrival model whose rate is
// an MLP of the state.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "drr/autodiff.hpp"

namespace drr {

using Rng = std::mt19937_64;

inline Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

inline Matrix gaussian_init(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
  std::normal_distribution<double> d(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

inline double fan_in_scale(Eigen::Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// ---------------------------------------------------------------------------
// Event embedding: z = W_tau * tau + W_delta * delta + W_y * y + b

struct EventEmbedder {
  Parameter w_tau, w_delta, w_y, b;

  EventEmbedder() = default;
  EventEmbedder(const std::string& prefix, int embed, int hash_dim, Rng& rng)
      : w_tau(prefix + "W_tau", uniform_init(embed, 1, 0.01, rng)),
        w_delta(prefix + "W_delta", uniform_init(embed, 1, 0.01, rng)),
        w_y(prefix + "W_y", uniform_init(embed, hash_dim, 0.1, rng)),
        b(prefix + "b", Matrix::Zero(embed, 1)) {}

  int embed_dim() const { return static_cast<int>(b.value.rows()); }
  int hash_dim() const { return static_cast<int>(w_y.value.cols()); }

  std::vector<Parameter*> parameters() { return {&w_tau, &w_delta, &w_y, &b}; }
};

/// `y` is the hashed rating vector in sparse (bucket, signed value) form.
inline ad::Var embed_event(ad::Tape& t, const EventEmbedder& p, double tau, double delta,
                           const std::vector<ad::SparseEntry>& y) {
  for (const auto& e : y)
    if (e.index < 0 || e.index >= p.hash_dim()) throw std::invalid_argument("embed_event: hashed index out of range");
  ad::Var z = ad::add(t, ad::scale(t, t.param(p.w_tau), tau), ad::scale(t, t.param(p.w_delta), delta));
  z = ad::add(t, z, ad::sparse_matvec(t, t.param(p.w_y), y));
  return ad::add(t, z, t.param(p.b));
}

inline Vector embed_event(const EventEmbedder& p, double tau, double delta, const Vector& y) {
  if (y.size() != p.hash_dim()) throw std::invalid_argument("embed_event: rating vector dimension mismatch");
  return p.w_tau.value.col(0) * tau + p.w_delta.value.col(0) * delta + p.w_y.value * y + p.b.value.col(0);
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate rows are laid out as [input | forget | candidate | output].

struct LstmCell {
  Parameter w_x, w_h, b;

  LstmCell() = default;
  LstmCell(const std::string& prefix, int input, int hidden, Rng& rng)
      : w_x(prefix + "W_x", uniform_init(4 * hidden, input, fan_in_scale(input), rng)),
        w_h(prefix + "W_h", uniform_init(4 * hidden, hidden, fan_in_scale(hidden), rng)),
        b(prefix + "b", Matrix::Zero(4 * hidden, 1)) {
    b.value.block(hidden, 0, hidden, 1).setOnes();
  }

  int hidden() const { return static_cast<int>(w_h.value.cols()); }
  int input() const { return static_cast<int>(w_x.value.cols()); }

  std::vector<Parameter*> parameters() { return {&w_x, &w_h, &b}; }
};

struct TemporalState {
  Vector h;
  Vector cell;

  static TemporalState zero(int hidden) { return {Vector::Zero(hidden), Vector::Zero(hidden)}; }
};

struct StateVars {
  ad::Var h;
  ad::Var cell;
};

inline StateVars constant_state(ad::Tape& t, const TemporalState& s) {
  return {t.constant(s.h), t.constant(s.cell)};
}

inline TemporalState state_value(const ad::Tape& t, const StateVars& s) {
  return {t.value(s.h).col(0), t.value(s.cell).col(0)};
}

inline StateVars lstm_step(ad::Tape& t, const LstmCell& p, ad::Var x, const StateVars& prev) {
  const int H = p.hidden();
  if (t.value(x).rows() != p.input() || t.value(prev.h).rows() != H)
    throw std::invalid_argument("lstm_step: dimension mismatch");
  ad::Var pre = ad::add(t, ad::add(t, ad::matmul(t, t.param(p.w_x), x), ad::matmul(t, t.param(p.w_h), prev.h)),
                        t.param(p.b));
  ad::Var in = ad::sigmoid(t, ad::slice(t, pre, 0, H));
  ad::Var forget = ad::sigmoid(t, ad::slice(t, pre, H, H));
  ad::Var cand = ad::tanh(t, ad::slice(t, pre, 2 * H, H));
  ad::Var out = ad::sigmoid(t, ad::slice(t, pre, 3 * H, H));
  ad::Var c = ad::add(t, ad::mul(t, forget, prev.cell), ad::mul(t, in, cand));
  ad::Var h = ad::mul(t, out, ad::tanh(t, c));
  return {h, c};
}

inline TemporalState step(const Vector& z, const TemporalState& state, const LstmCell& p) {
  ad::Tape t(false);
  return state_value(t, lstm_step(t, p, t.constant(z), constant_state(t, state)));
}

// ---------------------------------------------------------------------------
// Arrival model: lambda(h) = softplus(w2 . tanh(W1 h + b1) + b2)

struct IntensityHead {
  Parameter w1, b1, w2, b2;

  IntensityHead() = default;
  IntensityHead(const std::string& prefix, int hidden, Rng& rng)
      : w1(prefix + "W1", uniform_init(hidden, hidden, fan_in_scale(hidden), rng)),
        b1(prefix + "b1", Matrix::Zero(hidden, 1)),
        w2(prefix + "w2", uniform_init(1, hidden, fan_in_scale(hidden), rng)),
        b2(prefix + "b2", Matrix::Zero(1, 1)) {}

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

inline ad::Var intensity(ad::Tape& t, const IntensityHead& p, ad::Var h) {
  ad::Var hidden = ad::tanh(t, ad::add(t, ad::matmul(t, t.param(p.w1), h), t.param(p.b1)));
  return ad::softplus(t, ad::add(t, ad::matmul(t, t.param(p.w2), hidden), t.param(p.b2)));
}

inline double intensity(const IntensityHead& p, const Vector& h) {
  ad::Tape t(false);
  return t.scalar_value(intensity(t, p, t.constant(h)));
}

/// -(log lambda - lambda * delta): one term of the negative exponential log-likelihood.
inline double nll_exponential(double lambda, double delta) {
  if (!(lambda > 0.0)) throw std::domain_error("nll_exponential: rate must be positive");
  return -(std::log(lambda) - lambda * delta);
}

inline ad::Var nll_exponential(ad::Tape& t, ad::Var lambda, double delta) {
  const double l = t.scalar_value(lambda);
  if (!(l > 0.0)) throw std::domain_error("nll_exponential: rate must be positive");
  return ad::sub(t, ad::scale(t, lambda, delta), ad::log(t, lambda));
}

/// d/d(lambda) of nll_exponential.
inline double nll_exponential_grad(double lambda, double delta) { return delta - 1.0 / lambda; }

/// Mean of the exponential arrival distribution.
inline double predict_next_time(double lambda) { return 1.0 / lambda; }

inline double predict_next_time(const IntensityHead& p, const TemporalState& s) {
  return predict_next_time(intensity(p, s.h));
}

/// Everything one entity kind (users or items) owns in the sequence model.
struct SideDynamics {
  EventEmbedder embed;
  LstmCell cell;
  IntensityHead head;

  SideDynamics() = default;
  SideDynamics(const std::string& prefix, int embed_dim, int hash_dim, int hidden, Rng& rng)
      : embed(prefix, embed_dim, hash_dim, rng),
        cell(prefix + "lstm.", embed_dim, hidden, rng),
        head(prefix + "intensity.", hidden, rng) {}

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out = embed.parameters();
    for (Parameter* p : cell.parameters()) out.push_back(p);
    for (Parameter* p : head.parameters()) out.push_back(p);
    return out;
  }
};

}  // namespace drr
