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

// Static baseline: global mean + user bias + item bias + rank-r factors,
// fit on the training split by full-batch Adam. Ignores time and text.

#include <limits>
#include <stdexcept>
#include <vector>

#include "drr/adam.hpp"
#include "drr/corpus.hpp"
#include "drr/dynamics.hpp"
#include "drr/evaluate.hpp"

namespace drr {

struct MfOptions {
  int rank = 0;
  int epochs = 300;
  double learning_rate = 0.05;
  double l2 = 0.05;
  std::uint64_t seed = 1;
};

class StaticMf {
 public:
  StaticMf(std::size_t users, std::size_t items, const MfOptions& opt)
      : opt_(opt), mu_("mf.mu", Matrix::Zero(1, 1)), bu_("mf.user_bias", Matrix::Zero(static_cast<Eigen::Index>(users), 1)),
        bi_("mf.item_bias", Matrix::Zero(static_cast<Eigen::Index>(items), 1)) {
    if (opt.rank < 0) throw std::invalid_argument("rank must be >= 0");
    Rng rng(opt.seed);
    p_ = Parameter("mf.user_factors", gaussian_init(static_cast<Eigen::Index>(users), opt.rank, 0.1, rng));
    q_ = Parameter("mf.item_factors", gaussian_init(static_cast<Eigen::Index>(items), opt.rank, 0.1, rng));
  }

  double predict(std::size_t u, std::size_t i) const {
    const auto ui = static_cast<Eigen::Index>(u), ii = static_cast<Eigen::Index>(i);
    double y = mu_.value(0, 0) + bu_.value(ui, 0) + bi_.value(ii, 0);
    if (opt_.rank > 0) y += p_.value.row(ui).dot(q_.value.row(ii));
    return y;
  }

  /// Full-batch fit on the training split; returns the final training MSE.
  double fit(const Corpus& c) {
    const auto train = reviews_in(c, Split::train);
    if (train.empty()) throw std::runtime_error("static baseline: training split is empty");
    double mean = 0.0;
    for (std::size_t r : train) mean += c.reviews[r].rating;
    mu_.value(0, 0) = mean / static_cast<double>(train.size());
    Adam adam({opt_.learning_rate, 0.9, 0.999, 1e-8});
    const double n = static_cast<double>(train.size());
    double mse = 0.0;
    for (int epoch = 0; epoch < opt_.epochs; ++epoch) {
      Matrix gmu = Matrix::Zero(1, 1);
      Matrix gbu = opt_.l2 * 2.0 * bu_.value / n, gbi = opt_.l2 * 2.0 * bi_.value / n;
      Matrix gp = opt_.l2 * 2.0 * p_.value / n, gq = opt_.l2 * 2.0 * q_.value / n;
      mse = 0.0;
      for (std::size_t r : train) {
        const Review& rv = c.reviews[r];
        const auto u = static_cast<Eigen::Index>(rv.user), i = static_cast<Eigen::Index>(rv.item);
        const double err = predict(rv.user, rv.item) - rv.rating;
        mse += err * err;
        const double g = 2.0 * err / n;
        gmu(0, 0) += g;
        gbu(u, 0) += g;
        gbi(i, 0) += g;
        if (opt_.rank > 0) {
          gp.row(u) += g * q_.value.row(i);
          gq.row(i) += g * p_.value.row(u);
        }
      }
      mse /= n;
      adam.begin_step();
      adam.apply(mu_, &gmu);
      adam.apply(bu_, &gbu);
      adam.apply(bi_, &gbi);
      if (opt_.rank > 0) {
        adam.apply(p_, &gp);
        adam.apply(q_, &gq);
      }
    }
    return mse;
  }

  /// Rating metrics only; arrival and content fields stay empty.
  MetricsReport evaluate(const Corpus& c, Split split) const {
    MetricsReport rep;
    rep.split = split;
    for (std::size_t r = 0; r < c.reviews.size(); ++r) ++rep.counts[static_cast<int>(c.split_of(r))];
    std::vector<double> target;
    for (std::size_t r : reviews_in(c, split)) {
      rep.reviews.push_back(r);
      rep.predictions.push_back(predict(c.reviews[r].user, c.reviews[r].item));
      target.push_back(c.reviews[r].rating);
    }
    if (rep.reviews.empty()) throw std::runtime_error(std::string("split '") + split_name(split) + "' is empty");
    rep.ratings = rep.reviews.size();
    rep.mse = mean_squared_error(rep.predictions, target);
    return rep;
  }

  int rank() const { return opt_.rank; }
  double global_mean() const { return mu_.value(0, 0); }

 private:
  MfOptions opt_;
  Parameter mu_, bu_, bi_, p_, q_;
};

inline MetricsReport static_mf_baseline(const Corpus& c, const MfOptions& opt, Split split = Split::test) {
  StaticMf mf(c.users.size(), c.items.size(), opt);
  mf.fit(c);
  return mf.evaluate(c, split);
}

struct TunedMf {
  MfOptions options;
  double validation_mse = 0.0;
  MetricsReport report;
};

/// Fits every (rank, l2) pair and keeps the one with the lowest validation MSE.
inline TunedMf tuned_static_mf(const Corpus& c, const std::vector<int>& ranks, const std::vector<double>& l2s,
                               MfOptions base = {}, Split split = Split::test) {
  if (ranks.empty() || l2s.empty()) throw std::invalid_argument("tuned_static_mf: empty grid");
  TunedMf best;
  best.validation_mse = std::numeric_limits<double>::infinity();
  for (int rank : ranks)
    for (double l2 : l2s) {
      MfOptions o = base;
      o.rank = rank;
      o.l2 = l2;
      StaticMf mf(c.users.size(), c.items.size(), o);
      mf.fit(c);
      const double v = mf.evaluate(c, Split::validation).mse;
      if (v < best.validation_mse) best = {o, v, mf.evaluate(c, split)};
    }
  return best;
}

}  // namespace drr
