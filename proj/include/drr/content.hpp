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

// Review content models conditioned on the global temporal state
// concat(h_user, h_item): a bag-of-words softmax, an autoregressive LSTM
// language model, and gated attention pooling of the language model states.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drr/autodiff.hpp"
#include "drr/corpus.hpp"
#include "drr/dynamics.hpp"

namespace drr {

// ---------------------------------------------------------------------------
// Bag of words: p(w | h) = softmax(R^T h + b)_w

struct BowModel {
  Parameter r;  // 2H x V
  Parameter b;  // V x 1

  BowModel() = default;
  BowModel(int global_dim, int vocab, Rng& rng)
      : r("bow.R", uniform_init(global_dim, vocab, 0.01, rng)), b("bow.b", Matrix::Zero(vocab, 1)) {}

  int vocab() const { return static_cast<int>(b.value.rows()); }
  std::vector<Parameter*> parameters() { return {&r, &b}; }
};

/// Per-word log-probabilities log p(. | h) over the vocabulary.
inline ad::Var bow_log_softmax(ad::Tape& t, const BowModel& p, ad::Var global) {
  if (t.value(global).rows() != p.r.value.rows()) throw std::invalid_argument("bow: global state dimension mismatch");
  return ad::log_softmax(t, ad::add(t, ad::matmul_t(t, t.param(p.r), global), t.param(p.b)));
}

/// Sum of log p(w_j | h) over the review's tokens (words drawn independently).
inline ad::Var bow_log_prob(ad::Tape& t, const BowModel& p, const std::vector<int>& tokens, ad::Var global) {
  if (tokens.empty()) return t.scalar(0.0);
  ad::Var counts = t.constant(bow_vector(tokens, p.vocab()));
  return ad::dot(t, counts, bow_log_softmax(t, p, global));
}

inline double bow_log_prob(const BowModel& p, const std::vector<int>& tokens, const Vector& global) {
  ad::Tape t(false);
  return t.scalar_value(bow_log_prob(t, p, tokens, t.constant(global)));
}

// ---------------------------------------------------------------------------
// Autoregressive language model

struct LanguageModel {
  Parameter embedding;  // V x D, row per token
  LstmCell cell;        // input D + 2H, hidden S
  Parameter w_out;      // V x S

  LanguageModel() = default;
  LanguageModel(int vocab, int word_dim, int global_dim, int state, Rng& rng)
      : embedding("lm.embedding", gaussian_init(vocab, word_dim, 0.1, rng)),
        cell("lm.lstm.", word_dim + global_dim, state, rng),
        w_out("lm.W_out", uniform_init(vocab, state, fan_in_scale(state), rng)) {}

  int vocab() const { return static_cast<int>(w_out.value.rows()); }
  int state_dim() const { return cell.hidden(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding};
    for (Parameter* p : cell.parameters()) out.push_back(p);
    out.push_back(&w_out);
    return out;
  }
};

struct LmResult {
  ad::Var log_prob;
  /// States after reading each interior token x_1 .. x_{n-2} of x = (x_0 .. x_{n-1}).
  std::vector<ad::Var> states;
};

/// Teacher-forced log p(x_1 .. x_{n-1} | x_0, h) for x_0 = <bos>. Every step
/// reads concat(embedding(x_j), h). Tokens at or beyond the vocabulary map to
/// <unk>.
inline LmResult lm_log_prob(ad::Tape& t, const LanguageModel& p, const std::vector<int>& x, ad::Var global) {
  if (x.empty() || x.front() != Vocabulary::kBos) throw std::invalid_argument("lm_log_prob: sequence must start with <bos>");
  const int V = p.vocab();
  const int S = p.state_dim();
  StateVars s{t.constant(Vector::Zero(S)), t.constant(Vector::Zero(S))};
  ad::Var table = t.param(p.embedding);
  ad::Var out = t.param(p.w_out);
  LmResult res;
  std::vector<ad::Var> terms;
  for (std::size_t j = 0; j + 1 < x.size(); ++j) {
    ad::Var w = ad::row_of(t, table, clip_token(x[j], V));
    s = lstm_step(t, p.cell, ad::concat(t, {w, global}), s);
    if (j > 0) res.states.push_back(s.h);
    terms.push_back(ad::pick(t, ad::log_softmax(t, ad::matmul(t, out, s.h)), clip_token(x[j + 1], V)));
  }
  res.log_prob = ad::add_n(t, terms);
  return res;
}

/// <bos> review <eos>
inline std::vector<int> delimit(const std::vector<int>& tokens) {
  std::vector<int> x;
  x.reserve(tokens.size() + 2);
  x.push_back(Vocabulary::kBos);
  x.insert(x.end(), tokens.begin(), tokens.end());
  x.push_back(Vocabulary::kEos);
  return x;
}

/// Next-token distributions at every step, for normalization checks.
inline std::vector<Vector> lm_step_distributions(const LanguageModel& p, const std::vector<int>& x, const Vector& global) {
  ad::Tape t(false);
  const int S = p.state_dim();
  StateVars s{t.constant(Vector::Zero(S)), t.constant(Vector::Zero(S))};
  std::vector<Vector> out;
  for (std::size_t j = 0; j + 1 < x.size(); ++j) {
    ad::Var w = ad::row_of(t, t.param(p.embedding), clip_token(x[j], p.vocab()));
    s = lstm_step(t, p.cell, ad::concat(t, {w, t.constant(global)}), s);
    out.push_back(ad::log_softmax_values(p.w_out.value * t.value(s.h).col(0)).array().exp());
  }
  return out;
}

/// Replaces embedding rows of tokens found in a whitespace-separated
/// "token v1 .. vD" text file. Returns the number of rows replaced.
inline std::size_t load_embeddings(LanguageModel& p, const Vocabulary& vocab, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings " + path);
  const auto D = p.embedding.value.cols();
  std::size_t replaced = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (static_cast<Eigen::Index>(v.size()) != D)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(D) + " values");
    const int id = vocab.index(token);
    if (id == Vocabulary::kUnk && token != "<unk>") continue;
    if (id >= p.vocab()) continue;
    p.embedding.value.row(id) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), D);
    ++replaced;
  }
  return replaced;
}

// ---------------------------------------------------------------------------
// Gated attention pooling:
//   k_j = tanh(M1 s_j + b1) * sigmoid(M2 s_j + b2),  alpha = softmax_j(k_j . q),
//   pooled = sum_j alpha_j s_j

struct GatedAttention {
  Parameter m1, b1, m2, b2, q;

  GatedAttention() = default;
  GatedAttention(int state, int attention, Rng& rng)
      : m1("attn.M1", uniform_init(attention, state, fan_in_scale(state), rng)),
        b1("attn.b1", Matrix::Zero(attention, 1)),
        m2("attn.M2", uniform_init(attention, state, fan_in_scale(state), rng)),
        b2("attn.b2", Matrix::Zero(attention, 1)),
        q("attn.q", uniform_init(attention, 1, fan_in_scale(attention), rng)) {}

  std::vector<Parameter*> parameters() { return {&m1, &b1, &m2, &b2, &q}; }
};

struct AttentionPool {
  ad::Var weights;  // L x 1
  ad::Var pooled;   // S x 1
};

inline AttentionPool gated_attention_pool(ad::Tape& t, const GatedAttention& p, const std::vector<ad::Var>& states) {
  if (states.empty()) throw std::invalid_argument("gated_attention_pool: no states to pool");
  ad::Var s = ad::hstack(t, states);  // S x L
  ad::Var branch = ad::tanh(t, ad::add_broadcast(t, ad::matmul(t, t.param(p.m1), s), t.param(p.b1)));
  ad::Var gate = ad::sigmoid(t, ad::add_broadcast(t, ad::matmul(t, t.param(p.m2), s), t.param(p.b2)));
  ad::Var keys = ad::mul(t, branch, gate);                              // A x L
  ad::Var alpha = ad::softmax(t, ad::matmul_t(t, keys, t.param(p.q)));  // L x 1
  return {alpha, ad::matmul(t, s, alpha)};
}

struct AttentionValues {
  Vector weights;
  Vector pooled;
};

inline AttentionValues gated_attention_pool(const GatedAttention& p, const std::vector<Vector>& states) {
  ad::Tape t(false);
  std::vector<ad::Var> vs;
  for (const auto& s : states) vs.push_back(t.constant(s));
  auto a = gated_attention_pool(t, p, vs);
  return {t.value(a.weights).col(0), t.value(a.pooled).col(0)};
}

}  // namespace drr
