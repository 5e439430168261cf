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

// Planted-structure review corpora. Each user writes reviews at exponential
// gaps; ratings combine static biases and factors, a global time trend and a
// per-user random-walk mood; review words lean positive or negative with the
// mood. Optionally one item attracts a share of all reviews and carries two
// marker words whose frequencies cross over time.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drr/corpus.hpp"
#include "drr/dynamics.hpp"

namespace drr {

struct SyntheticSpec {
  int users = 50;
  int items = 30;
  int reviews_per_user = 8;
  double arrival_rate = 2.0;  // per day
  double rate_spread = 0.0;   // sd of log rate across users
  double drift = 0.0;         // mood random walk, sd per sqrt(day)
  double trend = 0.0;         // global rating change across the horizon
  double user_bias_sd = 0.3;
  double item_bias_sd = 0.5;
  int rank = 0;
  double affinity_sd = 0.0;
  double noise_sd = 0.5;
  int words_per_review = 8;
  int sentiment_words = 10;   // per polarity
  int filler_words = 30;
  double sentiment_share = 0.5;
  double word_coupling = 2.0;
  double focus_share = 0.0;   // probability a review goes to the first item
  bool marker_words = false;  // "alpha" early, "beta" late on the first item
  double marker_sharpness = 12.0;  // slope of the alpha/beta crossover
  std::uint64_t seed = 7;
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"users", s.users},
       {"items", s.items},
       {"reviews_per_user", s.reviews_per_user},
       {"arrival_rate", s.arrival_rate},
       {"rate_spread", s.rate_spread},
       {"drift", s.drift},
       {"trend", s.trend},
       {"user_bias_sd", s.user_bias_sd},
       {"item_bias_sd", s.item_bias_sd},
       {"rank", s.rank},
       {"affinity_sd", s.affinity_sd},
       {"noise_sd", s.noise_sd},
       {"words_per_review", s.words_per_review},
       {"sentiment_words", s.sentiment_words},
       {"filler_words", s.filler_words},
       {"sentiment_share", s.sentiment_share},
       {"word_coupling", s.word_coupling},
       {"focus_share", s.focus_share},
       {"marker_words", s.marker_words},
       {"marker_sharpness", s.marker_sharpness},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  nlohmann::json known;
  to_json(known, SyntheticSpec{});
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw std::invalid_argument("synthetic spec: unknown key '" + it.key() + "'");
  s = SyntheticSpec{};
  nlohmann::json merged = known;
  merged.update(j);
  merged.at("users").get_to(s.users);
  merged.at("items").get_to(s.items);
  merged.at("reviews_per_user").get_to(s.reviews_per_user);
  merged.at("arrival_rate").get_to(s.arrival_rate);
  merged.at("rate_spread").get_to(s.rate_spread);
  merged.at("drift").get_to(s.drift);
  merged.at("trend").get_to(s.trend);
  merged.at("user_bias_sd").get_to(s.user_bias_sd);
  merged.at("item_bias_sd").get_to(s.item_bias_sd);
  merged.at("rank").get_to(s.rank);
  merged.at("affinity_sd").get_to(s.affinity_sd);
  merged.at("noise_sd").get_to(s.noise_sd);
  merged.at("words_per_review").get_to(s.words_per_review);
  merged.at("sentiment_words").get_to(s.sentiment_words);
  merged.at("filler_words").get_to(s.filler_words);
  merged.at("sentiment_share").get_to(s.sentiment_share);
  merged.at("word_coupling").get_to(s.word_coupling);
  merged.at("focus_share").get_to(s.focus_share);
  merged.at("marker_words").get_to(s.marker_words);
  merged.at("marker_sharpness").get_to(s.marker_sharpness);
  merged.at("seed").get_to(s.seed);
  if (s.users < 1 || s.items < 1 || s.reviews_per_user < 1) throw std::invalid_argument("synthetic spec: empty corpus");
  if (!(s.arrival_rate > 0)) throw std::invalid_argument("synthetic spec: arrival_rate must be positive");
}

struct SyntheticFixture {
  std::vector<TimedReview> reviews;  // generation order
  Corpus corpus;                     // assembled and split 80/10/10
  nlohmann::json truth;
  double horizon = 0.0;              // expected time span in days
};

inline std::string synthetic_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%04d", prefix, i);
  return buf;
}

inline SyntheticFixture gen_synthetic(const SyntheticSpec& s) {
  Rng rng(s.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };

  const double horizon = s.reviews_per_user / s.arrival_rate;
  std::vector<double> ubias(s.users), ibias(s.items), rates(s.users);
  std::vector<std::vector<double>> pf(s.users, std::vector<double>(s.rank)), qf(s.items, std::vector<double>(s.rank));
  for (int u = 0; u < s.users; ++u) {
    ubias[u] = s.user_bias_sd * normal(rng);
    rates[u] = s.arrival_rate * std::exp(s.rate_spread * normal(rng));
    for (auto& x : pf[u]) x = s.affinity_sd * normal(rng);
  }
  for (int i = 0; i < s.items; ++i) {
    ibias[i] = s.item_bias_sd * normal(rng);
    for (auto& x : qf[i]) x = s.affinity_sd * normal(rng);
  }

  SyntheticFixture fx;
  fx.horizon = horizon;
  nlohmann::json truth_users = nlohmann::json::array();
  for (int u = 0; u < s.users; ++u) {
    double tau = 0.0;
    double mood = s.drift * std::sqrt(1.0 / rates[u]) * normal(rng);
    nlohmann::json moods = nlohmann::json::array();
    for (int k = 0; k < s.reviews_per_user; ++k) {
      const double gap = std::exponential_distribution<double>(rates[u])(rng);
      tau += gap;
      if (k > 0) mood += s.drift * std::sqrt(gap) * normal(rng);
      const int item = (s.focus_share > 0 && unif(rng) < s.focus_share) ? 0 : pick(s.items);
      double affinity = 0.0;
      for (int f = 0; f < s.rank; ++f) affinity += pf[u][f] * qf[item][f];
      const double latent =
          3.0 + s.trend * (tau / horizon - 0.5) + ubias[u] + ibias[item] + affinity + mood;
      const double rating = std::clamp(latent + s.noise_sd * normal(rng), 1.0, 5.0);

      std::vector<std::string> words;
      const double p_pos = 1.0 / (1.0 + std::exp(-s.word_coupling * mood));
      for (int w = 0; w < s.words_per_review; ++w) {
        if (unif(rng) < s.sentiment_share)
          words.push_back((unif(rng) < p_pos ? "good" : "bad") + std::to_string(pick(s.sentiment_words)));
        else
          words.push_back("w" + std::to_string(pick(s.filler_words)));
      }
      if (s.marker_words && item == 0) {
        const double p_alpha = 1.0 / (1.0 + std::exp(s.marker_sharpness * (tau / horizon - 0.5)));
        const auto pos = static_cast<std::ptrdiff_t>(pick(static_cast<int>(words.size()) + 1));
        words.insert(words.begin() + pos, unif(rng) < p_alpha ? "alpha" : "beta");
      }
      fx.reviews.push_back({synthetic_id('u', u), synthetic_id('i', item), tau, rating, std::move(words)});
      moods.push_back(mood);
    }
    truth_users.push_back({{"id", synthetic_id('u', u)}, {"rate", rates[u]}, {"bias", ubias[u]}, {"mood", moods}});
  }
  nlohmann::json truth_items = nlohmann::json::array();
  for (int i = 0; i < s.items; ++i) truth_items.push_back({{"id", synthetic_id('i', i)}, {"bias", ibias[i]}});
  fx.truth = {{"spec", s}, {"horizon", horizon}, {"users", truth_users}, {"items", truth_items}};

  SequenceOptions opt;
  opt.min_days = 1;
  opt.vocab_size = 4 + 2 * s.sentiment_words + s.filler_words + 2;
  opt.hash_seed = splitmix64(s.seed);
  fx.corpus = assemble_corpus(fx.reviews, opt);
  fx.corpus.split = temporal_split(fx.corpus);
  return fx;
}

/// Rewrites the fixture as raw JSON lines (times rounded to whole seconds).
inline std::string synthetic_jsonl(const SyntheticFixture& fx, std::int64_t epoch_seconds = 1300000000) {
  std::string out;
  for (const auto& r : fx.reviews) {
    std::string text;
    for (const auto& w : r.words) text += (text.empty() ? "" : " ") + w;
    nlohmann::json j = {{"reviewerID", r.user_id},
                        {"asin", r.item_id},
                        {"overall", r.rating},
                        {"unixReviewTime", epoch_seconds + static_cast<std::int64_t>(std::llround(r.tau * 86400.0))},
                        {"reviewText", text}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace drr
