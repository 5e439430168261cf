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

// Combining temporal and review-summary representations, the factorization
// machine rating head, and the three-term training objective.

#include <stdexcept>
#include <string>
#include <vector>

#include "drr/autodiff.hpp"
#include "drr/dynamics.hpp"

namespace drr {

/// Bag-of-words route: the summary enters the event embedding, z + W_s s.
struct BowFusion {
  Parameter w_s;  // E x V

  BowFusion() = default;
  BowFusion(const std::string& prefix, int embed, int vocab, Rng& rng)
      : w_s(prefix + "W_s", uniform_init(embed, vocab, 0.01, rng)) {}

  std::vector<Parameter*> parameters() { return {&w_s}; }
};

inline ad::Var fuse_bow(ad::Tape& t, const BowFusion& p, ad::Var z, ad::Var summary) {
  if (t.value(summary).rows() != p.w_s.value.cols() || t.value(z).rows() != p.w_s.value.rows())
    throw std::invalid_argument("fuse_bow: dimension mismatch");
  return ad::add(t, z, ad::matmul(t, t.param(p.w_s), summary));
}

/// Same as above with the count vector in sparse form.
inline ad::Var fuse_bow(ad::Tape& t, const BowFusion& p, ad::Var z, std::vector<ad::SparseEntry> summary) {
  return ad::add(t, z, ad::sparse_matvec(t, t.param(p.w_s), std::move(summary)));
}

inline Vector fuse_bow(const BowFusion& p, const Vector& z, const Vector& summary) {
  ad::Tape t(false);
  return t.value(fuse_bow(t, p, t.constant(z), t.constant(summary))).col(0);
}

enum class FusionMode { causal, noncausal };

/// Language-model route: W concat(h, s) + b. Causal mode is handed the summary
/// of the entity's latest written review, non-causal mode the summary of the
/// review whose rating is predicted.
struct LmFusion {
  Parameter w;  // H x (H + S)
  Parameter b;  // H x 1

  LmFusion() = default;
  LmFusion(const std::string& prefix, int hidden, int summary, Rng& rng)
      : w(prefix + "W", uniform_init(hidden, hidden + summary, fan_in_scale(hidden + summary), rng)),
        b(prefix + "b", Matrix::Zero(hidden, 1)) {}

  std::vector<Parameter*> parameters() { return {&w, &b}; }
};

inline ad::Var fuse_lm(ad::Tape& t, const LmFusion& p, ad::Var h, ad::Var summary) {
  if (t.value(h).rows() + t.value(summary).rows() != p.w.value.cols())
    throw std::invalid_argument("fuse_lm: dimension mismatch");
  return ad::add(t, ad::matmul(t, t.param(p.w), ad::concat(t, {h, summary})), t.param(p.b));
}

inline Vector fuse_lm(const LmFusion& p, const Vector& h, const Vector& summary) {
  ad::Tape t(false);
  return t.value(fuse_lm(t, p, t.constant(h), t.constant(summary))).col(0);
}

// ---------------------------------------------------------------------------
// Factorization machine over h = concat(h_user, h_item)

struct FactorizationMachine {
  Parameter w0;       // 1 x 1
  Parameter w;        // 2H x 1
  Parameter factors;  // 2H x K

  FactorizationMachine() = default;
  FactorizationMachine(int input, int k, Rng& rng)
      : w0("fm.w0", Matrix::Zero(1, 1)),
        w("fm.w_linear", Matrix::Zero(input, 1)),
        factors("fm.v_factors", gaussian_init(input, k, 0.01, rng)) {
    if (k < 1) throw std::invalid_argument("factorization machine needs K >= 1");
  }

  std::vector<Parameter*> parameters() { return {&w0, &w, &factors}; }
};

/// w0 + w.h + 1/2 sum_f [(sum_i v_if h_i)^2 - sum_i v_if^2 h_i^2]
inline ad::Var fm_predict(ad::Tape& t, const FactorizationMachine& p, ad::Var h) {
  if (t.value(h).rows() != p.w.value.rows()) throw std::invalid_argument("fm_predict: input dimension mismatch");
  ad::Var v = t.param(p.factors);
  ad::Var linear = ad::add(t, t.param(p.w0), ad::matmul_t(t, t.param(p.w), h));
  ad::Var proj = ad::matmul_t(t, v, h);
  ad::Var sq = ad::matmul_t(t, ad::mul(t, v, v), ad::mul(t, h, h));
  ad::Var pair = ad::scale(t, ad::sub(t, ad::sum(t, ad::mul(t, proj, proj)), ad::sum(t, sq)), 0.5);
  return ad::add(t, linear, pair);
}

inline double fm_predict(const FactorizationMachine& p, const Vector& h) {
  ad::Tape t(false);
  return t.scalar_value(fm_predict(t, p, t.constant(h)));
}

inline ad::Var fm_predict(ad::Tape& t, const FactorizationMachine& p, ad::Var user, ad::Var item) {
  return fm_predict(t, p, ad::concat(t, {user, item}));
}

/// The O(n^2 K) pairwise sum, kept as a reference.
inline double fm_predict_naive(const FactorizationMachine& p, const Vector& h) {
  const Matrix& v = p.factors.value;
  double y = p.w0.value(0, 0) + p.w.value.col(0).dot(h);
  for (Eigen::Index i = 0; i < h.size(); ++i)
    for (Eigen::Index j = i + 1; j < h.size(); ++j) y += v.row(i).dot(v.row(j)) * h(i) * h(j);
  return y;
}

// ---------------------------------------------------------------------------
// Objective

struct LossWeights {
  double lambda1 = 0.1;
  double lambda2 = 0.01;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw std::invalid_argument("loss weights must be non-negative");
  }
};

/// rating_mse + lambda1 * arrival_nll + lambda2 * content_nll, with both
/// likelihood terms given as negative log-likelihood sums.
inline double total_loss(double rating_mse, double arrival_nll, double content_nll, const LossWeights& w) {
  w.validate();
  return rating_mse + w.lambda1 * arrival_nll + w.lambda2 * content_nll;
}

inline double total_loss(const std::vector<double>& squared_errors, const std::vector<double>& arrival_nll,
                         const std::vector<double>& content_nll, const LossWeights& w) {
  double mse = 0.0;
  for (double e : squared_errors) mse += e;
  if (!squared_errors.empty()) mse /= static_cast<double>(squared_errors.size());
  double a = 0.0, c = 0.0;
  for (double x : arrival_nll) a += x;
  for (double x : content_nll) c += x;
  return total_loss(mse, a, c, w);
}

inline ad::Var total_loss(ad::Tape& t, ad::Var rating_mse, ad::Var arrival_nll, ad::Var content_nll,
                          const LossWeights& w) {
  w.validate();
  ad::Var l = rating_mse;
  if (w.lambda1 != 0.0) l = ad::add(t, l, ad::scale(t, arrival_nll, w.lambda1));
  if (w.lambda2 != 0.0) l = ad::add(t, l, ad::scale(t, content_nll, w.lambda2));
  return l;
}

}  // namespace drr
