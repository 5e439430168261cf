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

// The assembled recommender: two sequence models (users, items), an optional
// content model, the fusion route of the chosen variant, and the rating head.
//
// Alignment of the two asynchronous sequences: the rating of review r by user
// u on item v is predicted from u's state after the events preceding r in u's
// sequence, and from v's state after its last event strictly earlier than
// tau_r. The same pair of states conditions the content model of review r.

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "drr/autodiff.hpp"
#include "drr/config.hpp"
#include "drr/content.hpp"
#include "drr/corpus.hpp"
#include "drr/dynamics.hpp"
#include "drr/fusion.hpp"

namespace drr {

enum class ParamGroup { user, item, content, rating };

class DrrModel {
 public:
  DrrModel(const ModelConfig& cfg, int corpus_vocab) : config_(cfg) {
    cfg.validate();
    const int H = cfg.hidden;
    const int E = cfg.event_embed;
    Rng rng(cfg.seed);
    user_ = SideDynamics("user.", E, cfg.hash_dim, H, rng);
    item_ = SideDynamics("item.", E, cfg.hash_dim, H, rng);
    if (uses_bow(cfg.variant)) {
      vocab_ = std::min(cfg.vocab_bow, corpus_vocab);
      user_bow_ = BowFusion("user.fuse.", E, vocab_, rng);
      item_bow_ = BowFusion("item.fuse.", E, vocab_, rng);
      bow_ = BowModel(2 * H, vocab_, rng);
    } else if (uses_lm(cfg.variant)) {
      vocab_ = std::min(cfg.vocab_lm, corpus_vocab);
      user_lm_ = LmFusion("user.fuse.", H, cfg.lm_state, rng);
      item_lm_ = LmFusion("item.fuse.", H, cfg.lm_state, rng);
      lm_ = LanguageModel(vocab_, cfg.word_embed, 2 * H, cfg.lm_state, rng);
      attention_ = GatedAttention(cfg.lm_state, cfg.attention, rng);
    }
    fm_ = FactorizationMachine(2 * H, cfg.fm_factors, rng);
  }

  DrrModel(const DrrModel&) = default;
  DrrModel& operator=(const DrrModel&) = default;

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  int vocab() const { return vocab_; }
  int hidden() const { return config_.hidden; }

  const SideDynamics& side(EntityKind k) const { return k == EntityKind::user ? user_ : item_; }
  SideDynamics& side(EntityKind k) { return k == EntityKind::user ? user_ : item_; }
  const BowFusion& bow_fusion(EntityKind k) const { return k == EntityKind::user ? user_bow_ : item_bow_; }
  const LmFusion& lm_fusion(EntityKind k) const { return k == EntityKind::user ? user_lm_ : item_lm_; }
  const BowModel& bow() const { return bow_; }
  const LanguageModel& lm() const { return lm_; }
  LanguageModel& lm() { return lm_; }
  const GatedAttention& attention() const { return attention_; }
  const FactorizationMachine& fm() const { return fm_; }
  FactorizationMachine& fm() { return fm_; }

  /// Every parameter of the active variant, in a fixed order.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    auto add = [&](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    add(user_.parameters());
    if (uses_bow(variant())) add(user_bow_.parameters());
    if (uses_lm(variant())) add(user_lm_.parameters());
    add(item_.parameters());
    if (uses_bow(variant())) add(item_bow_.parameters());
    if (uses_lm(variant())) add(item_lm_.parameters());
    if (uses_bow(variant())) add(bow_.parameters());
    if (uses_lm(variant())) {
      add(lm_.parameters());
      add(attention_.parameters());
    }
    add(fm_.parameters());
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    auto ps = const_cast<DrrModel*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  Parameter* find(const std::string& name) {
    for (Parameter* p : parameters())
      if (p->name == name) return p;
    return nullptr;
  }

  static ParamGroup group_of(const Parameter& p) {
    const std::string& n = p.name;
    if (n.rfind("user.", 0) == 0) return ParamGroup::user;
    if (n.rfind("item.", 0) == 0) return ParamGroup::item;
    if (n.rfind("fm.", 0) == 0) return ParamGroup::rating;
    return ParamGroup::content;
  }

  /// Whether `p` may move at all under the configuration (embeddings and the
  /// content switch), independent of the alternating phase.
  bool configurable_trainable(const Parameter& p) const {
    if (&p == &lm_.embedding && !config_.finetune_embeddings) return false;
    if (config_.freeze_content && group_of(p) == ParamGroup::content) return false;
    return true;
  }

 private:
  ModelConfig config_;
  int vocab_ = 0;
  SideDynamics user_, item_;
  BowFusion user_bow_, item_bow_;
  BowModel bow_;
  LmFusion user_lm_, item_lm_;
  LanguageModel lm_;
  GatedAttention attention_;
  FactorizationMachine fm_;
};

// ---------------------------------------------------------------------------
// Precomputed per-corpus inputs

struct Layout {
  /// Number of item events strictly earlier than each review.
  std::vector<std::size_t> item_context;
  /// Hashed rating vector of each sequence event, [entity][event].
  std::vector<std::vector<std::vector<ad::SparseEntry>>> user_y, item_y;
  /// Sparse clipped bag-of-words counts per review (BoW variant).
  std::vector<std::vector<ad::SparseEntry>> bow;
  /// <bos> tokens <eos> per review (LM variants).
  std::vector<std::vector<int>> delimited;
  /// Predicted tokens per review for perplexity.
  std::vector<std::size_t> content_tokens;

  std::size_t context(EntityKind k, const Corpus& c, std::size_t review) const {
    return k == EntityKind::user ? c.user_pos[review] : item_context[review];
  }

  const std::vector<ad::SparseEntry>& y(EntityKind k, std::size_t e, std::size_t j) const {
    return k == EntityKind::user ? user_y[e][j] : item_y[e][j];
  }
};

inline std::vector<ad::SparseEntry> sparse_counts(const std::vector<int>& tokens, int V) {
  std::map<int, double> counts;
  for (int t : tokens) counts[clip_token(t, V)] += 1.0;
  std::vector<ad::SparseEntry> out;
  for (const auto& [i, c] : counts) out.push_back({i, c});
  return out;
}

inline Layout make_layout(const DrrModel& m, const Corpus& c) {
  Layout l;
  l.item_context.resize(c.reviews.size());
  for (std::size_t r = 0; r < c.reviews.size(); ++r) {
    const auto& ev = c.items[c.reviews[r].item].events;
    const double tau = c.reviews[r].tau;
    l.item_context[r] = static_cast<std::size_t>(
        std::lower_bound(ev.begin(), ev.end(), tau, [](const ReviewEvent& e, double x) { return e.tau < x; }) -
        ev.begin());
  }
  FeatureHasher uh(m.config().hash_dim, c.hash_seed);
  FeatureHasher ih(m.config().hash_dim, c.hash_seed + 1);
  auto hash_side = [](const std::vector<ReviewSequence>& seqs, const FeatureHasher& h) {
    std::vector<std::vector<std::vector<ad::SparseEntry>>> out(seqs.size());
    for (std::size_t e = 0; e < seqs.size(); ++e)
      for (const auto& ev : seqs[e].events) out[e].push_back(h.hash({{ev.counterpart, ev.rating}}));
    return out;
  };
  l.user_y = hash_side(c.users, uh);
  l.item_y = hash_side(c.items, ih);
  l.content_tokens.resize(c.reviews.size(), 0);
  if (uses_bow(m.variant())) {
    for (std::size_t r = 0; r < c.reviews.size(); ++r) {
      l.bow.push_back(sparse_counts(c.reviews[r].tokens, m.vocab()));
      l.content_tokens[r] = c.reviews[r].tokens.size();
    }
  }
  if (uses_lm(m.variant())) {
    for (std::size_t r = 0; r < c.reviews.size(); ++r) {
      l.delimited.push_back(delimit(c.reviews[r].tokens));
      l.content_tokens[r] = c.reviews[r].tokens.size() + 1;
    }
  }
  return l;
}

// ---------------------------------------------------------------------------
// Value caches

/// States of every entity after k = 0..n included events, plus per-review
/// content outputs. Included events are those up to `horizon`.
struct StateCache {
  Split horizon = Split::train;
  std::vector<std::vector<TemporalState>> user, item;
  std::vector<Vector> summary;          // LM variants
  std::vector<double> content_log_prob; // NaN when not computed
  std::vector<char> included;           // per review

  const std::vector<TemporalState>& states(EntityKind k, std::size_t e) const {
    return k == EntityKind::user ? user[e] : item[e];
  }
};

// ---------------------------------------------------------------------------
// One differentiable pass

/// Which entities are recomputed on the tape. Everything else is read from the
/// cache as a constant.
struct LiveSet {
  std::vector<char> users;
  std::vector<char> items;

  bool contains(EntityKind k, std::size_t e) const {
    const auto& v = k == EntityKind::user ? users : items;
    return e < v.size() && v[e];
  }

  static LiveSet none(const Corpus& c) {
    return {std::vector<char>(c.users.size(), 0), std::vector<char>(c.items.size(), 0)};
  }
  static LiveSet all(const Corpus& c) {
    return {std::vector<char>(c.users.size(), 1), std::vector<char>(c.items.size(), 1)};
  }
};

class ForwardPass {
 public:
  ForwardPass(ad::Tape& tape, const DrrModel& model, const Corpus& corpus, const Layout& layout,
              const StateCache& cache, LiveSet live)
      : t_(tape), m_(model), c_(corpus), l_(layout), cache_(cache), live_(std::move(live)) {}

  /// Included event count of an entity.
  std::size_t length(EntityKind k, std::size_t e) const { return cache_.states(k, e).size() - 1; }

  /// Recurrent state after k events.
  StateVars state(EntityKind k, std::size_t e, std::size_t k_events) {
    if (!live_.contains(k, e)) {
      const auto key = std::make_tuple(static_cast<int>(k), e, k_events);
      auto it = const_states_.find(key);
      if (it != const_states_.end()) return it->second;
      StateVars s = constant_state(t_, cache_.states(k, e).at(k_events));
      const_states_.emplace(key, s);
      return s;
    }
    auto& memo = (k == EntityKind::user ? live_users_ : live_items_)[e];
    if (memo.empty()) memo = run_sequence(k, e);
    return memo.at(k_events);
  }

  /// FM input of one side for review r, with that side's state after k events.
  ad::Var fused(EntityKind k, std::size_t e, std::size_t k_events, std::size_t r) {
    StateVars s = state(k, e, k_events);
    switch (m_.variant()) {
      case Variant::dynamics_only:
      case Variant::drr_bow:
        return s.h;
      case Variant::drr_lm_causal: {
        ad::Var summ = k_events == 0 ? t_.constant(Vector::Zero(m_.config().lm_state))
                                     : summary(c_.sequence(k, e).events[k_events - 1].review);
        return fuse_lm(t_, m_.lm_fusion(k), s.h, summ);
      }
      case Variant::drr_lm_noncausal:
        return fuse_lm(t_, m_.lm_fusion(k), s.h, summary(r));
    }
    throw std::logic_error("unreachable");
  }

  ad::Var predict(std::size_t r) {
    const Review& rv = c_.reviews[r];
    ad::Var u = fused(EntityKind::user, rv.user, l_.context(EntityKind::user, c_, r), r);
    ad::Var v = fused(EntityKind::item, rv.item, l_.context(EntityKind::item, c_, r), r);
    return fm_predict(t_, m_.fm(), u, v);
  }

  /// concat(h_user, h_item) preceding review r.
  ad::Var global_state(std::size_t r) {
    const Review& rv = c_.reviews[r];
    return ad::concat(t_, {state(EntityKind::user, rv.user, l_.context(EntityKind::user, c_, r)).h,
                           state(EntityKind::item, rv.item, l_.context(EntityKind::item, c_, r)).h});
  }

  bool review_live(std::size_t r) const {
    return live_.contains(EntityKind::user, c_.reviews[r].user) || live_.contains(EntityKind::item, c_.reviews[r].item);
  }

  /// log p(x_r | h) under the variant's content model.
  ad::Var content_log_prob(std::size_t r) {
    if (uses_bow(m_.variant())) return bow_log_prob(t_, m_.bow(), c_.reviews[r].tokens, global_state(r));
    if (uses_lm(m_.variant())) return lm_pass(r).log_prob;
    throw std::logic_error("variant has no content model");
  }

  /// Attention-pooled LM summary of review r (zero for an empty review).
  ad::Var summary(std::size_t r) {
    if (!review_live(r)) {
      auto it = const_summaries_.find(r);
      if (it != const_summaries_.end()) return it->second;
      ad::Var s = t_.constant(cache_.summary.at(r));
      const_summaries_.emplace(r, s);
      return s;
    }
    return lm_pass(r).pooled;
  }

  struct LmOutputs {
    ad::Var log_prob;
    ad::Var pooled;
    ad::Var weights;  // invalid for an empty review
  };

  LmOutputs& lm_pass(std::size_t r) {
    auto it = lm_memo_.find(r);
    if (it != lm_memo_.end()) return it->second;
    LmResult res = lm_log_prob(t_, m_.lm(), l_.delimited[r], global_state(r));
    LmOutputs out;
    out.log_prob = res.log_prob;
    if (res.states.empty()) {
      out.pooled = t_.constant(Vector::Zero(m_.config().lm_state));
    } else {
      AttentionPool a = gated_attention_pool(t_, m_.attention(), res.states);
      out.pooled = a.pooled;
      out.weights = a.weights;
    }
    return lm_memo_.emplace(r, out).first->second;
  }

  /// Sum of arrival NLL terms over the entity's included events: the gap of
  /// event j is scored by the rate of the state after j events, j >= 1.
  ad::Var arrival_nll(EntityKind k, std::size_t e, std::size_t* terms = nullptr) {
    const auto& events = c_.sequence(k, e).events;
    const std::size_t n = length(k, e);
    std::vector<ad::Var> parts;
    for (std::size_t j = 1; j < n; ++j) {
      ad::Var lam = intensity(t_, m_.side(k).head, state(k, e, j).h);
      parts.push_back(nll_exponential(t_, lam, events[j].delta));
    }
    if (terms) *terms += parts.size();
    return ad::add_n(t_, parts);
  }

  ad::Tape& tape() { return t_; }

 private:
  std::vector<StateVars> run_sequence(EntityKind k, std::size_t e) {
    const auto& events = c_.sequence(k, e).events;
    const std::size_t n = length(k, e);
    const SideDynamics& side = m_.side(k);
    const int H = m_.hidden();
    const auto window = static_cast<std::size_t>(m_.config().bptt_window);
    std::vector<StateVars> out;
    out.reserve(n + 1);
    out.push_back({t_.constant(Vector::Zero(H)), t_.constant(Vector::Zero(H))});
    for (std::size_t j = 0; j < n; ++j) {
      StateVars prev = out.back();
      if (j > 0 && j % window == 0) prev = {ad::detach(t_, prev.h), ad::detach(t_, prev.cell)};
      const auto& ev = events[j];
      ad::Var z = embed_event(t_, side.embed, ev.tau, ev.delta, l_.y(k, e, j));
      if (uses_bow(m_.variant())) z = fuse_bow(t_, m_.bow_fusion(k), z, l_.bow[ev.review]);
      out.push_back(lstm_step(t_, side.cell, z, prev));
    }
    return out;
  }

  ad::Tape& t_;
  const DrrModel& m_;
  const Corpus& c_;
  const Layout& l_;
  const StateCache& cache_;
  LiveSet live_;
  std::unordered_map<std::size_t, std::vector<StateVars>> live_users_, live_items_;
  std::map<std::tuple<int, std::size_t, std::size_t>, StateVars> const_states_;
  std::unordered_map<std::size_t, ad::Var> const_summaries_;
  std::unordered_map<std::size_t, LmOutputs> lm_memo_;
};

/// Runs every sequence up to `horizon` with the current parameters.
inline StateCache compute_cache(const DrrModel& m, const Corpus& c, const Layout& l, Split horizon,
                                bool with_content = true) {
  StateCache cache;
  cache.horizon = horizon;
  cache.included.resize(c.reviews.size());
  for (std::size_t r = 0; r < c.reviews.size(); ++r)
    cache.included[r] = static_cast<int>(c.split_of(r)) <= static_cast<int>(horizon);

  // Lengths first: an entity's included events are a prefix of its sequence.
  auto prefix_len = [&](const ReviewSequence& s) {
    std::size_t n = 0;
    while (n < s.events.size() && cache.included[s.events[n].review]) ++n;
    return n;
  };
  cache.user.resize(c.users.size());
  cache.item.resize(c.items.size());
  for (std::size_t e = 0; e < c.users.size(); ++e)
    cache.user[e].resize(prefix_len(c.users[e]) + 1);
  for (std::size_t e = 0; e < c.items.size(); ++e)
    cache.item[e].resize(prefix_len(c.items[e]) + 1);

  for (EntityKind k : {EntityKind::user, EntityKind::item}) {
    auto& dst = k == EntityKind::user ? cache.user : cache.item;
    for (std::size_t e = 0; e < dst.size(); ++e) {
      ad::Tape t(false);
      ForwardPass fp(t, m, c, l, cache, LiveSet::all(c));
      for (std::size_t j = 0; j < dst[e].size(); ++j) dst[e][j] = state_value(t, fp.state(k, e, j));
    }
  }

  cache.content_log_prob.assign(c.reviews.size(), std::numeric_limits<double>::quiet_NaN());
  const bool lm = uses_lm(m.variant());
  if (lm) cache.summary.assign(c.reviews.size(), Vector::Zero(m.config().lm_state));
  if (!(lm || (with_content && uses_bow(m.variant())))) return cache;
  for (std::size_t r = 0; r < c.reviews.size(); ++r) {
    if (!cache.included[r]) continue;
    ad::Tape t(false);
    ForwardPass fp(t, m, c, l, cache, LiveSet::none(c));
    if (lm) {
      auto& out = fp.lm_pass(r);
      cache.summary[r] = t.value(out.pooled).col(0);
      cache.content_log_prob[r] = t.scalar_value(out.log_prob);
    } else {
      cache.content_log_prob[r] = t.scalar_value(fp.content_log_prob(r));
    }
  }
  return cache;
}

/// Rating prediction for review r from cached values.
inline double predict_rating(const DrrModel& m, const Corpus& c, const Layout& l, const StateCache& cache,
                             std::size_t r) {
  ad::Tape t(false);
  ForwardPass fp(t, m, c, l, cache, LiveSet::none(c));
  return t.scalar_value(fp.predict(r));
}

}  // namespace drr
