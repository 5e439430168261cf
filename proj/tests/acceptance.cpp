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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "testing.hpp"

namespace drr {
namespace {

constexpr Variant kVariants[] = {Variant::dynamics_only, Variant::drr_bow, Variant::drr_lm_causal,
                                 Variant::drr_lm_noncausal};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

Outcome closed_form_likelihood() {
  Rng rng(101);
  std::uniform_real_distribution<double> log_rate(std::log(1e-3), std::log(1e3));
  std::uniform_real_distribution<double> gap(0.0, 30.0);
  double worst_value = 0.0, worst_grad = 0.0, worst_tape = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double lam = std::exp(log_rate(rng)), d = gap(rng);
    worst_value = std::max(worst_value, std::abs(nll_exponential(lam, d) + (std::log(lam) - lam * d)));
    worst_grad = std::max(worst_grad, std::abs(nll_exponential_grad(lam, d) - (d - 1.0 / lam)));
    Parameter p("lambda", Matrix::Constant(1, 1, lam));
    ad::Tape t(true);
    t.backward(nll_exponential(t, t.param(p), d));
    worst_tape = std::max(worst_tape, std::abs((*t.gradient(p))(0, 0) - (d - 1.0 / lam)));
  }
  return {worst_value <= 1e-9 && worst_grad <= 1e-6 && worst_tape <= 1e-6,
          "max |nll error| " + fmt(worst_value) + ", max |grad error| " + fmt(std::max(worst_grad, worst_tape))};
}

Outcome gradient_audit() {
  const Corpus c = testing::micro_corpus();
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (Variant v : kVariants) {
    DrrModel m(testing::tiny_config(v), c.vocab.size());
    m.fm().w0.value(0, 0) = 3.0;
    const auto res = testing::audit_model_gradients(m, c);
    checked += res.checked;
    if (res.worst > worst) {
      worst = res.worst;
      where = std::string(variant_name(v)) + " " + res.where;
    }
  }
  return {worst <= 1e-4, std::to_string(checked) + " entries, worst relative error " + fmt(worst) +
                             (where.empty() ? "" : " at " + where)};
}

Outcome normalization() {
  Rng rng(103);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_int_distribution<int> len(1, 20);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    BowModel bow(6, 40, rng);
    bow.r.value *= 10.0;
    ad::Tape t(false);
    const Vector h = Vector::NullaryExpr(6, [&] { return n(rng); });
    worst = std::max(worst, std::abs(t.value(bow_log_softmax(t, bow, t.constant(h))).array().exp().sum() - 1.0));

    LanguageModel lm(40, 5, 6, 7, rng);
    lm.w_out.value *= 10.0;
    std::vector<int> tokens;
    for (int j = len(rng); j > 0; --j) tokens.push_back(std::uniform_int_distribution<int>(4, 39)(rng));
    for (const Vector& d : lm_step_distributions(lm, delimit(tokens), h)) worst = std::max(worst, std::abs(d.sum() - 1.0));

    GatedAttention att(7, 5, rng);
    att.q.value *= 10.0;
    std::vector<Vector> states;
    for (int j = len(rng); j > 0; --j) states.push_back(Vector::NullaryExpr(7, [&] { return n(rng); }));
    const auto pooled = gated_attention_pool(att, states);
    worst = std::max(worst, std::abs(pooled.weights.sum() - 1.0));
    if (pooled.weights.minCoeff() < 0.0) worst = std::max(worst, 1.0);
  }
  return {worst <= 1e-6, "3000 distributions, max |sum - 1| " + fmt(worst)};
}

Outcome fm_oracle() {
  Rng rng(104);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int hidden : {2, 16, 32})
    for (int k = 0; k < 100; ++k) {
      FactorizationMachine fm(2 * hidden, 10, rng);
      fm.w0.value(0, 0) = n(rng);
      fm.w.value = Matrix::NullaryExpr(2 * hidden, 1, [&] { return n(rng); });
      fm.factors.value = Matrix::NullaryExpr(2 * hidden, 10, [&] { return n(rng); });
      const Vector h = Vector::NullaryExpr(2 * hidden, [&] { return n(rng); });
      worst = std::max(worst, std::abs(fm_predict(fm, h) - fm_predict_naive(fm, h)));
    }
  return {worst <= 1e-8, "300 instances, max |fast - naive| " + fmt(worst)};
}

Outcome causality() {
  SyntheticSpec s;
  s.users = 12;
  s.items = 6;
  s.reviews_per_user = 6;
  s.drift = 0.5;
  s.seed = 11;
  const SyntheticFixture fx = gen_synthetic(s);
  const Corpus& c = fx.corpus;
  const std::size_t r = testing::review_with_history(c);
  int causal_same = 0, noncausal_changed = 0;
  for (Variant v : {Variant::drr_lm_causal, Variant::drr_lm_noncausal}) {
    DrrModel m(testing::tiny_config(v), c.vocab.size());
    const double base = testing::predict_with_tokens(m, c, r, c.reviews[r].tokens);
    std::mt19937_64 g(105);
    for (int k = 0; k < 100; ++k) {
      const double y = testing::predict_with_tokens(m, c, r, testing::perturb_tokens(c.reviews[r].tokens, m.vocab(), g));
      if (v == Variant::drr_lm_causal) causal_same += y == base;
      else noncausal_changed += y != base;
    }
  }
  return {causal_same == 100 && noncausal_changed >= 99, "causal unchanged " + std::to_string(causal_same) +
                                                             "/100, non-causal changed " +
                                                             std::to_string(noncausal_changed) + "/100"};
}

Outcome alternating_freeze() {
  SyntheticSpec s;
  s.users = 10;
  s.items = 5;
  s.reviews_per_user = 6;
  s.seed = 4;
  const SyntheticFixture fx = gen_synthetic(s);
  int phases = 0, violations = 0;
  for (Variant v : kVariants) {
    ModelConfig cfg = testing::tiny_config(v, 3);
    cfg.learning_rate = 0.01;
    cfg.batch_size = 3;
    DrrModel m(cfg, fx.corpus.vocab.size());
    Trainer tr(m, fx.corpus);
    tr.initialize();
    for (int round = 0; round < 3; ++round) {
      auto items = testing::parameter_bytes(m, ParamGroup::item);
      auto users = testing::parameter_bytes(m, ParamGroup::user);
      tr.run_phase(EntityKind::user);
      violations += testing::parameter_bytes(m, ParamGroup::item) != items;
      violations += testing::parameter_bytes(m, ParamGroup::user) == users;  // the phase must do something
      items = testing::parameter_bytes(m, ParamGroup::item);
      users = testing::parameter_bytes(m, ParamGroup::user);
      tr.run_phase(EntityKind::item);
      violations += testing::parameter_bytes(m, ParamGroup::user) != users;
      violations += testing::parameter_bytes(m, ParamGroup::item) == items;
      phases += 2;
    }
  }
  return {violations == 0, std::to_string(phases) + " phases, " + std::to_string(violations) + " violations"};
}

double train_and_test(Variant v, const Corpus& c, std::uint64_t seed) {
  DrrModel m(testing::trend_config(v, seed), c.vocab.size());
  Trainer tr(m, c);
  tr.initialize();
  tr.train();
  return evaluate(m, c, Split::test).mse;
}

Outcome trend_ordering() {
  std::vector<double> mf, dyn, bow;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SyntheticFixture fx = gen_synthetic(testing::trend_spec(seed));
    mf.push_back(tuned_static_mf(fx.corpus, {0, 2}, {0.05, 1.0, 5.0}).report.mse);
    dyn.push_back(train_and_test(Variant::dynamics_only, fx.corpus, seed));
    bow.push_back(train_and_test(Variant::drr_bow, fx.corpus, seed));
  }
  const double a = median(mf), b = median(dyn), d = median(bow);
  const double gap1 = (a - b) / a, gap2 = (b - d) / b;
  return {gap1 >= 0.03 && gap2 >= 0.03, "median test MSE static MF " + fmt(a) + " > dynamics-only " + fmt(b) +
                                            " > BoW " + fmt(d) + ", gaps " + fmt(100 * gap1) + "% and " +
                                            fmt(100 * gap2) + "%"};
}

Outcome arrival_recovery() {
  SyntheticSpec s;
  s.seed = 3;
  s.drift = 0.3;
  s.reviews_per_user = 20;
  const SyntheticFixture fx = gen_synthetic(s);  // user gaps ~ Exp(2)
  ModelConfig cfg = testing::fixture_config(Variant::dynamics_only, 1);
  cfg.lambda1 = 1.0;
  DrrModel m(cfg, fx.corpus.vocab.size());
  Trainer tr(m, fx.corpus);
  tr.initialize();
  tr.train();
  const double test_gap = evaluate(m, fx.corpus, Split::test).users.mean_predicted_gap;
  const double train_gap = evaluate(m, fx.corpus, Split::train).users.mean_predicted_gap;
  return {std::abs(test_gap - 0.5) <= 0.05, "mean predicted user gap " + fmt(test_gap) + " on test, " +
                                                fmt(train_gap) + " on train (target 0.5)"};
}

Outcome attention_drift() {
  const SyntheticFixture fx = gen_synthetic(testing::marker_spec(1));
  DrrModel m(testing::fixture_config(Variant::drr_lm_noncausal, 1), fx.corpus.vocab.size());
  Trainer tr(m, fx.corpus);
  tr.initialize();
  tr.train();
  const AttentionTimeline tl = export_attention_timeline(m, fx.corpus, "i0000", {"alpha", "beta"});
  std::vector<double> tau;
  for (const auto& r : tl.records) tau.push_back(r.tau);
  const auto a = spearman(tau, word_trajectory(tl, 0)), b = spearman(tau, word_trajectory(tl, 1));
  return {std::abs(a.rho) >= 0.6 && std::abs(b.rho) >= 0.6 && a.rho * b.rho < 0.0 && a.p_value < 0.05 &&
              b.p_value < 0.05,
          std::to_string(tl.records.size()) + " reviews, rho(alpha) " + fmt(a.rho) + " (p " + fmt(a.p_value) +
              "), rho(beta) " + fmt(b.rho) + " (p " + fmt(b.p_value) + ")"};
}

Outcome determinism() {
  SyntheticSpec s;
  s.users = 10;
  s.items = 5;
  s.reviews_per_user = 6;
  s.seed = 7;
  const SyntheticFixture fx = gen_synthetic(s);
  const Corpus& c = fx.corpus;
  int identical = 0, exact = 0, total = 0;
  for (Variant v : kVariants) {
    ModelConfig cfg = testing::tiny_config(v, 5);
    cfg.epochs = 2;
    cfg.batch_size = 3;
    std::string bytes[2];
    DrrModel m(cfg, c.vocab.size());
    for (std::string& b : bytes) {
      DrrModel run(cfg, c.vocab.size());
      Trainer tr(run, c);
      tr.initialize();
      tr.train();
      b = serialize_checkpoint(make_checkpoint(run, tr.optimizer(), tr.epoch(), c.vocab.size()));
      m = run;
    }
    identical += bytes[0] == bytes[1];

    const std::string path = testing::temp_path("acceptance.ckpt");
    save_checkpoint(deserialize_checkpoint(bytes[0]), path);
    const DrrModel back = model_from_checkpoint(load_checkpoint(path));
    std::filesystem::remove(path);
    const Layout l = make_layout(m, c);
    const StateCache a = compute_cache(m, c, l, Split::test, false);
    const StateCache b = compute_cache(back, c, l, Split::test, false);
    bool same = true;
    for (std::size_t r = 0; r < c.reviews.size(); ++r)
      same = same && predict_rating(m, c, l, a, r) == predict_rating(back, c, l, b, r);
    exact += same;
    ++total;
  }
  return {identical == total && exact == total, "identical checkpoints " + std::to_string(identical) + "/" +
                                                    std::to_string(total) + ", bit-exact reloads " +
                                                    std::to_string(exact) + "/" + std::to_string(total)};
}

}  // namespace
}  // namespace drr

int main() {
  using Check = drr::Outcome (*)();
  const std::pair<const char*, Check> criteria[] = {
      {"closed-form arrival likelihood", drr::closed_form_likelihood},
      {"gradient audit", drr::gradient_audit},
      {"softmax normalization", drr::normalization},
      {"factorization machine oracle", drr::fm_oracle},
      {"causality", drr::causality},
      {"alternating freeze", drr::alternating_freeze},
      {"synthetic trend ordering", drr::trend_ordering},
      {"arrival recovery", drr::arrival_recovery},
      {"attention drift", drr::attention_drift},
      {"determinism and persistence", drr::determinism},
  };
  int failed = 0, id = 0;
  for (const auto& [name, check] : criteria) {
    ++id;
    const auto t0 = std::chrono::steady_clock::now();
    drr::Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !out.pass;
    std::printf("%s %d %s: %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", id, name, out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", id - failed, id);
  return failed ? 1 : 0;
}
