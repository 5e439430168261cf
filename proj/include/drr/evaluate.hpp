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

// Split-level metrics. States are advanced through every event up to the
// evaluated split, so validation and test events act as warm-up for later
// predictions without ever touching parameters.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drr/model.hpp"

namespace drr {

struct ArrivalMetrics {
  double mae = 0.0;                 // |1/lambda - delta|
  double nll = 0.0;                 // mean per gap
  double mean_predicted_gap = 0.0;  // mean of 1/lambda
  double mean_observed_gap = 0.0;
  std::size_t gaps = 0;
};

struct MetricsReport {
  Split split = Split::test;
  std::size_t ratings = 0;
  double mse = 0.0;
  ArrivalMetrics users, items, arrivals;  // arrivals pools both sides
  double perplexity = std::numeric_limits<double>::quiet_NaN();  // NaN without a content model
  std::size_t content_tokens = 0;
  std::size_t counts[3] = {0, 0, 0};  // reviews per split
  std::vector<double> predictions;    // aligned with `reviews`
  std::vector<std::size_t> reviews;
};

inline double mean_squared_error(const std::vector<double>& predicted, const std::vector<double>& target) {
  if (predicted.size() != target.size()) throw std::invalid_argument("mean_squared_error: size mismatch");
  if (predicted.empty()) throw std::invalid_argument("mean_squared_error: no values");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += (predicted[i] - target[i]) * (predicted[i] - target[i]);
  return s / static_cast<double>(predicted.size());
}

namespace detail {

inline void finish(ArrivalMetrics& a) {
  if (a.gaps == 0) return;
  const auto n = static_cast<double>(a.gaps);
  a.mae /= n;
  a.nll /= n;
  a.mean_predicted_gap /= n;
  a.mean_observed_gap /= n;
}

}  // namespace detail

inline MetricsReport evaluate(const DrrModel& m, const Corpus& c, Split split) {
  MetricsReport rep;
  rep.split = split;
  for (std::size_t r = 0; r < c.reviews.size(); ++r) ++rep.counts[static_cast<int>(c.split_of(r))];
  if (rep.counts[static_cast<int>(split)] == 0)
    throw std::runtime_error(std::string("split '") + split_name(split) + "' is empty");

  const Layout l = make_layout(m, c);
  const StateCache cache = compute_cache(m, c, l, split, /*with_content=*/true);

  std::vector<double> target;
  for (std::size_t r = 0; r < c.reviews.size(); ++r) {
    if (c.split_of(r) != split) continue;
    rep.reviews.push_back(r);
    rep.predictions.push_back(predict_rating(m, c, l, cache, r));
    target.push_back(c.reviews[r].rating);
  }
  rep.ratings = rep.reviews.size();
  rep.mse = mean_squared_error(rep.predictions, target);

  // gap j of an entity is forecast from its state after j events
  for (EntityKind k : {EntityKind::user, EntityKind::item}) {
    ArrivalMetrics& a = k == EntityKind::user ? rep.users : rep.items;
    for (std::size_t e = 0; e < c.entity_count(k); ++e) {
      const auto& events = c.sequence(k, e).events;
      const auto& states = cache.states(k, e);
      for (std::size_t j = 1; j < states.size() && j < events.size(); ++j) {
        if (c.split_of(events[j].review) != split) continue;
        const double lam = intensity(m.side(k).head, states[j].h);
        const double gap = predict_next_time(lam);
        a.mae += std::abs(gap - events[j].delta);
        a.nll += nll_exponential(lam, events[j].delta);
        a.mean_predicted_gap += gap;
        a.mean_observed_gap += events[j].delta;
        ++a.gaps;
      }
    }
  }
  rep.arrivals.gaps = rep.users.gaps + rep.items.gaps;
  rep.arrivals.mae = rep.users.mae + rep.items.mae;
  rep.arrivals.nll = rep.users.nll + rep.items.nll;
  rep.arrivals.mean_predicted_gap = rep.users.mean_predicted_gap + rep.items.mean_predicted_gap;
  rep.arrivals.mean_observed_gap = rep.users.mean_observed_gap + rep.items.mean_observed_gap;
  detail::finish(rep.users);
  detail::finish(rep.items);
  detail::finish(rep.arrivals);

  if (m.variant() != Variant::dynamics_only) {
    double nll = 0.0;
    for (std::size_t r : rep.reviews) {
      nll -= cache.content_log_prob[r];
      rep.content_tokens += l.content_tokens[r];
    }
    if (rep.content_tokens > 0) rep.perplexity = std::exp(nll / static_cast<double>(rep.content_tokens));
  }
  return rep;
}

inline nlohmann::json report_json(const MetricsReport& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  auto arrival = [&](const ArrivalMetrics& a) {
    return nlohmann::json{{"mae", num(a.mae)},
                          {"nll", num(a.nll)},
                          {"mean_predicted_gap", num(a.mean_predicted_gap)},
                          {"mean_observed_gap", num(a.mean_observed_gap)},
                          {"gaps", a.gaps}};
  };
  return {{"split", split_name(r.split)},
          {"ratings", r.ratings},
          {"mse", num(r.mse)},
          {"arrival", arrival(r.arrivals)},
          {"arrival_users", arrival(r.users)},
          {"arrival_items", arrival(r.items)},
          {"perplexity", num(r.perplexity)},
          {"content_tokens", r.content_tokens},
          {"counts", {{"train", r.counts[0]}, {"validation", r.counts[1]}, {"test", r.counts[2]}}}};
}

}  // namespace drr
