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

// Fixtures and oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "drr/drr.hpp"

namespace drr::testing {

inline ModelConfig tiny_config(Variant v, std::uint64_t seed = 11) {
  ModelConfig c;
  c.variant = v;
  c.hidden = 3;
  c.event_embed = 4;
  c.attention = 3;
  c.lm_state = 3;
  c.fm_factors = 2;
  c.word_embed = 3;
  c.hash_dim = 8;
  c.vocab_bow = 64;
  c.vocab_lm = 64;
  c.seed = seed;
  return c;
}

/// Small but non-trivial sizes for training on synthetic fixtures.
inline ModelConfig fixture_config(Variant v, std::uint64_t seed = 1) {
  ModelConfig c;
  c.variant = v;
  c.hidden = 8;
  c.event_embed = 16;
  c.attention = 16;
  c.lm_state = 16;
  c.fm_factors = 4;
  c.word_embed = 16;
  c.hash_dim = 64;
  c.learning_rate = 0.005;
  c.batch_size = 8;
  c.epochs = 30;
  c.finetune_embeddings = true;
  c.seed = seed;
  return c;
}

/// Model sizes for the trend-ordering comparison.
inline ModelConfig trend_config(Variant v, std::uint64_t seed) {
  ModelConfig c = fixture_config(v, seed);
  c.hidden = 32;
  c.learning_rate = 0.003;
  return c;
}

/// 2 users, 2 items, 6 reviews, one of them empty. Everything is training data.
inline Corpus micro_corpus() {
  std::vector<TimedReview> in = {
      {"u0", "i0", 1.0, 4.0, {"good", "movie"}},
      {"u1", "i0", 2.0, 2.0, {"bad", "plot", "bad"}},
      {"u0", "i1", 3.0, 5.0, {"great", "great", "fun"}},
      {"u1", "i1", 4.5, 3.0, {"ok"}},
      {"u0", "i0", 5.5, 4.0, {"good", "again", "movie"}},
      {"u1", "i1", 7.0, 1.0, {}},
  };
  SequenceOptions opt;
  opt.min_days = 1;
  opt.vocab_size = 64;
  opt.hash_seed = 99;
  return assemble_corpus(in, opt);
}

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

struct AuditResult {
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
};

/// Central differences of `f` against `grad` for every entry of `p`.
inline void audit_parameter(Parameter& p, const Matrix& grad, const std::function<double()>& f, double step,
                            double floor, AuditResult& out) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    double& x = p.value.data()[i];
    const double x0 = x;
    x = x0 + step;
    const double up = f();
    x = x0 - step;
    const double down = f();
    x = x0;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(grad.data()[i], numeric, floor);
    ++out.checked;
    if (err > out.worst) {
      out.worst = err;
      out.where = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(grad.data()[i]) +
                  " numeric=" + std::to_string(numeric);
    }
  }
}

/// Audit of a scalar built on a tape from `params`.
inline AuditResult audit_tape_function(const std::vector<Parameter*>& params,
                                       const std::function<ad::Var(ad::Tape&)>& build, double step = 1e-6,
                                       double floor = 1e-3) {
  ad::Tape t(true);
  t.backward(build(t));
  std::vector<Matrix> grads;
  for (Parameter* p : params) {
    const Matrix* g = t.gradient(*p);
    grads.push_back(g ? *g : Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  auto f = [&] {
    ad::Tape v(false);
    return v.scalar_value(build(v));
  };
  AuditResult res;
  for (std::size_t i = 0; i < params.size(); ++i) audit_parameter(*params[i], grads[i], f, step, floor, res);
  return res;
}

/// Full-objective gradient audit in joint mode: every entity recomputed, all
/// parameters that may train under the configuration differentiated.
inline AuditResult audit_model_gradients(DrrModel& m, const Corpus& c, double step = 1e-6, double floor = 1e-3) {
  const Layout l = make_layout(m, c);
  const StateCache cache = compute_cache(m, c, l, Split::train, false);
  const StepPlan plan = plan_joint(c, cache);
  const auto trainable = phase_predicate(m, Phase::joint);
  const Gradients g = compute_gradients(m, c, l, cache, plan, trainable);
  AuditResult res;
  auto f = [&] { return evaluate_loss(m, c, l, cache, plan).total; };
  for (Parameter* p : m.parameters())
    if (trainable(*p)) audit_parameter(*p, g.by_name.at(p->name), f, step, floor, res);
  return res;
}

/// Rating predicted for review `r` after its text is replaced by `tokens`,
/// with every state and summary recomputed.
inline double predict_with_tokens(const DrrModel& m, Corpus c, std::size_t r, std::vector<int> tokens) {
  c.reviews.at(r).tokens = std::move(tokens);
  const Layout l = make_layout(m, c);
  const StateCache cache = compute_cache(m, c, l, Split::test, false);
  return predict_rating(m, c, l, cache, r);
}

/// Swaps one random token of `tokens` for a different in-vocabulary word.
inline std::vector<int> perturb_tokens(std::vector<int> tokens, int V, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> word(Vocabulary::kReserved, V - 1);
  if (tokens.empty()) return {word(rng)};
  auto& t = tokens[std::uniform_int_distribution<std::size_t>(0, tokens.size() - 1)(rng)];
  int w = word(rng);
  while (w == t) w = word(rng);
  t = w;
  return tokens;
}

/// A review with a prior review by the same user and a nonempty text.
inline std::size_t review_with_history(const Corpus& c) {
  for (std::size_t r = 0; r < c.reviews.size(); ++r)
    if (c.user_pos[r] >= 1 && c.reviews[r].tokens.size() >= 3) return r;
  throw std::logic_error("fixture has no review with history");
}

inline std::vector<char> parameter_bytes(const DrrModel& m, ParamGroup group) {
  std::vector<char> out;
  for (const Parameter* p : m.parameters()) {
    if (DrrModel::group_of(*p) != group) continue;
    const char* b = reinterpret_cast<const char*>(p->value.data());
    out.insert(out.end(), b, b + p->value.size() * static_cast<Eigen::Index>(sizeof(double)));
  }
  return out;
}

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("drr_test_" + name)).string();
}

/// Trend-reproduction fixture: drifting moods plus a global trend, words
/// coupled to mood.
inline SyntheticSpec trend_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.users = 50;
  s.items = 30;
  s.reviews_per_user = 8;
  s.drift = 0.5;
  s.trend = 2.0;
  s.noise_sd = 0.5;
  s.word_coupling = 3.0;
  s.sentiment_share = 0.6;
  s.seed = seed;
  return s;
}

/// One item attracts 30% of reviews and carries the alpha/beta crossover.
inline SyntheticSpec marker_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.drift = 0.5;
  s.focus_share = 0.3;
  s.marker_words = true;
  s.seed = seed;
  return s;
}

}  // namespace drr::testing
