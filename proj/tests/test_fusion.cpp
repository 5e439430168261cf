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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "testing.hpp"

namespace drr {
namespace {

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.users = 12;
  s.items = 6;
  s.reviews_per_user = 6;
  s.drift = 0.5;
  s.seed = seed;
  return s;
}

TEST(FuseBow, ZeroSummaryKeepsEmbedding) {
  Rng rng(1);
  BowFusion p("f.", 4, 10, rng);
  const Vector z = Vector::Random(4);
  EXPECT_EQ(fuse_bow(p, z, Vector::Zero(10)), z);
}

TEST(FuseBow, TwoDimensionalToy) {
  BowFusion p;
  p.w_s = Parameter("W_s", Matrix::Zero(2, 5));
  p.w_s.value(0, 0) = 1.0;
  p.w_s.value(1, 1) = 1.0;
  Vector s = Vector::Zero(5);
  s << 1, 2, 0, 0, 0;
  const Vector z = Vector::Random(2);
  const Vector out = fuse_bow(p, z, s);
  EXPECT_DOUBLE_EQ(out(0), z(0) + 1.0);
  EXPECT_DOUBLE_EQ(out(1), z(1) + 2.0);
}

TEST(FuseBow, SparseMatchesDense) {
  Rng rng(2);
  BowFusion p("f.", 4, 10, rng);
  ad::Tape t(false);
  const Vector z = Vector::Random(4);
  Vector dense = Vector::Zero(10);
  dense(3) = 2.0;
  dense(7) = 1.0;
  const Vector a = t.value(fuse_bow(t, p, t.constant(z), std::vector<ad::SparseEntry>{{3, 2.0}, {7, 1.0}})).col(0);
  EXPECT_LT((a - fuse_bow(p, z, dense)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FuseBow, DimensionMismatchThrows) {
  Rng rng(3);
  BowFusion p("f.", 4, 10, rng);
  EXPECT_THROW(fuse_bow(p, Vector::Zero(4), Vector::Zero(9)), std::invalid_argument);
  EXPECT_THROW(fuse_bow(p, Vector::Zero(3), Vector::Zero(10)), std::invalid_argument);
}

TEST(FuseBow, ZeroTextWeightReducesToDynamicsOnly) {
  const SyntheticFixture fx = gen_synthetic(small_spec(4));
  const Corpus& c = fx.corpus;
  DrrModel bow(testing::tiny_config(Variant::drr_bow), c.vocab.size());
  DrrModel dyn(testing::tiny_config(Variant::dynamics_only), c.vocab.size());
  for (Parameter* p : bow.parameters()) {
    if (p->name.find("fuse.W_s") != std::string::npos) {
      p->value.setZero();
      continue;
    }
    if (Parameter* q = dyn.find(p->name)) q->value = p->value;
  }
  const Layout lb = make_layout(bow, c), ld = make_layout(dyn, c);
  const StateCache cb = compute_cache(bow, c, lb, Split::test, false);
  const StateCache cd = compute_cache(dyn, c, ld, Split::test, false);
  for (std::size_t r = 0; r < c.reviews.size(); ++r)
    EXPECT_EQ(predict_rating(bow, c, lb, cb, r), predict_rating(dyn, c, ld, cd, r));
  for (std::size_t u = 0; u < c.users.size(); ++u)
    for (std::size_t j = 0; j < cb.user[u].size(); ++j) EXPECT_EQ(cb.user[u][j].h, cd.user[u][j].h);

  ad::Tape tb(false), td(false);
  ForwardPass fb(tb, bow, c, lb, cb, LiveSet::all(c)), fd(td, dyn, c, ld, cd, LiveSet::all(c));
  EXPECT_EQ(tb.scalar_value(fb.arrival_nll(EntityKind::user, 0)), td.scalar_value(fd.arrival_nll(EntityKind::user, 0)));
}

TEST(FuseLm, ProjectionExamples) {
  const int H = 3, S = 2;
  LmFusion p;
  p.w = Parameter("W", Matrix::Zero(H, H + S));
  p.b = Parameter("b", Matrix::Zero(H, 1));
  const Vector h = Vector::Random(H), s = Vector::Random(S);

  p.w.value.leftCols(H) = Matrix::Identity(H, H);
  EXPECT_EQ(fuse_lm(p, h, s), h);
  EXPECT_EQ(fuse_lm(p, h, Vector::Random(S)), h);

  p.w.value.setZero();
  p.w.value.block(0, H, S, S) = Matrix::Identity(S, S);
  const Vector a = fuse_lm(p, h, s);
  EXPECT_EQ(a, fuse_lm(p, Vector::Random(H), s));
  EXPECT_EQ(a.head(S), s);
}

TEST(FuseLm, AllOnesToy) {
  LmFusion p;
  p.w = Parameter("W", Matrix::Ones(1, 2));
  p.b = Parameter("b", Matrix::Ones(1, 1));
  const Vector out = fuse_lm(p, Vector::Constant(1, 0.3), Vector::Constant(1, -1.2));
  EXPECT_DOUBLE_EQ(out(0), 0.3 - 1.2 + 1.0);
}

TEST(FuseLm, DimensionMismatchThrows) {
  Rng rng(5);
  LmFusion p("f.", 3, 4, rng);
  EXPECT_THROW(fuse_lm(p, Vector::Zero(3), Vector::Zero(3)), std::invalid_argument);
}

FactorizationMachine zero_fm(int n, int k) {
  Rng rng(0);
  FactorizationMachine p(n, k, rng);
  p.factors.value.setZero();
  return p;
}

TEST(FmPredict, BiasOnly) {
  FactorizationMachine p = zero_fm(6, 3);
  p.w0.value(0, 0) = 3.5;
  EXPECT_EQ(fm_predict(p, Vector::Random(6)), 3.5);
}

TEST(FmPredict, TwoInputToy) {
  FactorizationMachine p = zero_fm(2, 10);
  p.w.value << 0.5, -1.0;
  p.factors.value(0, 0) = 1.0;
  p.factors.value(1, 1) = 1.0;
  const Vector h = Eigen::Vector2d(1.0, 2.0);
  EXPECT_NEAR(fm_predict(p, h), -1.5, 1e-15);
  EXPECT_NEAR(fm_predict_naive(p, h), -1.5, 1e-15);
}

TEST(FmPredict, LinearIdentityMatchesDoubleSum) {
  std::mt19937_64 g(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const int H = 1 + k % 16;
    Rng rng(static_cast<std::uint64_t>(k));
    FactorizationMachine p(2 * H, 10, rng);
    p.w0.value(0, 0) = n(g);
    p.w.value = Matrix::NullaryExpr(2 * H, 1, [&] { return n(g); });
    p.factors.value = Matrix::NullaryExpr(2 * H, 10, [&] { return n(g); });
    const Vector h = Vector::NullaryExpr(2 * H, [&] { return n(g); });
    EXPECT_NEAR(fm_predict(p, h), fm_predict_naive(p, h), 1e-8);
  }
}

TEST(FmPredict, InvariantUnderCoordinatePermutation) {
  Rng rng(7);
  FactorizationMachine p(8, 4, rng);
  p.w.value = Matrix::Random(8, 1);
  p.factors.value = Matrix::Random(8, 4);
  const Vector h = Vector::Random(8);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 g(8);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(perm.begin(), perm.end(), g);
    FactorizationMachine q = p;
    Vector hp(8);
    for (int i = 0; i < 8; ++i) {
      hp(i) = h(perm[i]);
      q.w.value.row(i) = p.w.value.row(perm[i]);
      q.factors.value.row(i) = p.factors.value.row(perm[i]);
    }
    EXPECT_NEAR(fm_predict(q, hp), fm_predict(p, h), 1e-12);
  }
}

TEST(FmPredict, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  FactorizationMachine p(6, 3, rng);
  p.w0.value(0, 0) = 0.7;
  p.w.value = Matrix::Random(6, 1);
  p.factors.value = Matrix::Random(6, 3);
  Parameter h("h", Matrix::Random(6, 1));
  auto build = [&](ad::Tape& t) { return fm_predict(t, p, t.param(h)); };
  const auto res = testing::audit_tape_function({&p.w0, &p.w, &p.factors, &h}, build);
  EXPECT_LE(res.worst, 1e-5) << res.where;
}

TEST(FmPredict, Errors) {
  Rng rng(10);
  FactorizationMachine p(6, 3, rng);
  EXPECT_THROW(fm_predict(p, Vector::Zero(5)), std::invalid_argument);
  EXPECT_THROW(FactorizationMachine(6, 0, rng), std::invalid_argument);
}

TEST(TotalLoss, Examples) {
  EXPECT_NEAR(total_loss(0.25, 2.0, 10.0, {0.1, 0.01}), 0.55, 1e-15);
  EXPECT_EQ(total_loss(0.25, 2.0, 10.0, {0.0, 0.0}), 0.25);
  EXPECT_EQ(total_loss({0.0, 0.0, 0.0}, {}, {}, {0.0, 0.0}), 0.0);
  EXPECT_NEAR(total_loss({0.25, 0.75}, {1.5, 0.5}, {4.0, 6.0}, {0.1, 0.01}), 0.5 + 0.2 + 0.1, 1e-15);
}

TEST(TotalLoss, TapeMatchesValues) {
  ad::Tape t;
  const LossWeights w{0.1, 0.01};
  EXPECT_NEAR(t.scalar_value(total_loss(t, t.scalar(0.25), t.scalar(2.0), t.scalar(10.0), w)), 0.55, 1e-15);
  EXPECT_EQ(t.scalar_value(total_loss(t, t.scalar(0.25), t.scalar(2.0), t.scalar(10.0), {0.0, 0.0})), 0.25);
}

TEST(TotalLoss, NegativeWeightsThrow) {
  EXPECT_THROW(total_loss(0.25, 2.0, 10.0, {-0.1, 0.01}), std::invalid_argument);
  EXPECT_THROW(total_loss(0.25, 2.0, 10.0, {0.1, -0.01}), std::invalid_argument);
  ad::Tape t;
  EXPECT_THROW(total_loss(t, t.scalar(0), t.scalar(0), t.scalar(0), {-1.0, 0.0}), std::invalid_argument);
}

TEST(TotalLoss, MonotoneInEachWeight) {
  double last = -1.0;
  for (double l1 = 0.0; l1 < 2.0; l1 += 0.1) {
    const double l = total_loss(0.3, 1.7, 4.0, {l1, 0.01});
    EXPECT_GE(l, last);
    last = l;
  }
  last = -1.0;
  for (double l2 = 0.0; l2 < 2.0; l2 += 0.1) {
    const double l = total_loss(0.3, 1.7, 4.0, {0.1, l2});
    EXPECT_GE(l, last);
    last = l;
  }
}

TEST(ModelCausality, CausalPredictionIgnoresPredictedText) {
  const SyntheticFixture fx = gen_synthetic(small_spec(11));
  const Corpus& c = fx.corpus;
  DrrModel m(testing::tiny_config(Variant::drr_lm_causal), c.vocab.size());
  const std::size_t r = testing::review_with_history(c);
  const double base = testing::predict_with_tokens(m, c, r, c.reviews[r].tokens);
  std::mt19937_64 g(12);
  for (int k = 0; k < 10; ++k) {
    const auto tokens = testing::perturb_tokens(c.reviews[r].tokens, m.vocab(), g);
    EXPECT_EQ(testing::predict_with_tokens(m, c, r, tokens), base);
  }
}

TEST(ModelCausality, NonCausalPredictionReadsPredictedText) {
  const SyntheticFixture fx = gen_synthetic(small_spec(11));
  const Corpus& c = fx.corpus;
  DrrModel m(testing::tiny_config(Variant::drr_lm_noncausal), c.vocab.size());
  const std::size_t r = testing::review_with_history(c);
  const double base = testing::predict_with_tokens(m, c, r, c.reviews[r].tokens);
  std::mt19937_64 g(12);
  for (int k = 0; k < 10; ++k) {
    const auto tokens = testing::perturb_tokens(c.reviews[r].tokens, m.vocab(), g);
    EXPECT_NE(testing::predict_with_tokens(m, c, r, tokens), base);
  }
}

TEST(ModelCausality, PredictionPairsStatesBeforeTheReview) {
  const Corpus c = testing::micro_corpus();
  DrrModel m(testing::tiny_config(Variant::dynamics_only), c.vocab.size());
  const Layout l = make_layout(m, c);
  for (std::size_t r = 0; r < c.reviews.size(); ++r) {
    const auto& items = c.items[c.reviews[r].item].events;
    std::size_t before = 0;
    for (const auto& e : items) before += e.tau < c.reviews[r].tau;
    EXPECT_EQ(l.item_context[r], before);
    EXPECT_EQ(l.context(EntityKind::user, c, r), c.user_pos[r]);
  }
  // Changing the rating of a review leaves its own prediction unchanged.
  const StateCache cache = compute_cache(m, c, l, Split::test, false);
  Corpus d = c;
  const std::size_t r = c.reviews.size() - 1;
  d.reviews[r].rating = 5.0;
  for (auto* seqs : {&d.users, &d.items})
    for (auto& s : *seqs)
      for (auto& e : s.events)
        if (e.review == r) e.rating = 5.0;
  const Layout ld = make_layout(m, d);
  const StateCache cd = compute_cache(m, d, ld, Split::test, false);
  EXPECT_EQ(predict_rating(m, c, l, cache, r), predict_rating(m, d, ld, cd, r));
}

}  // namespace
}  // namespace drr
