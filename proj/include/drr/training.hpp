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

// Alternating optimization. Each epoch runs a user phase and an item phase.
// In the user phase every item-side parameter is frozen and item states are
// read from a cache computed once at phase start; user sequences are
// recomputed on the tape batch by batch. Shared parts (content model, rating
// head) train in both phases. The item phase mirrors this.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drr/adam.hpp"
#include "drr/model.hpp"

namespace drr {

enum class Phase { joint, users, items };

struct LossReport {
  double total = 0.0;
  double rating_mse = 0.0;
  double arrival_nll = 0.0;  // sum over terms
  double content_nll = 0.0;  // sum over reviews
  std::size_t ratings = 0;
  std::size_t arrivals = 0;
  std::size_t reviews = 0;
};

/// What one loss evaluation covers.
struct StepPlan {
  LiveSet live;
  std::vector<std::size_t> reviews;  // rating and content terms
  std::vector<std::pair<EntityKind, std::size_t>> arrivals;
};

/// All included reviews and all entities, everything recomputed on the tape.
inline StepPlan plan_joint(const Corpus& c, const StateCache& cache) {
  StepPlan p{LiveSet::all(c), {}, {}};
  for (std::size_t r = 0; r < c.reviews.size(); ++r)
    if (cache.included[r]) p.reviews.push_back(r);
  for (std::size_t e = 0; e < c.users.size(); ++e) p.arrivals.emplace_back(EntityKind::user, e);
  for (std::size_t e = 0; e < c.items.size(); ++e) p.arrivals.emplace_back(EntityKind::item, e);
  return p;
}

/// A minibatch of entities of one kind; their included reviews carry the loss.
inline StepPlan plan_batch(const Corpus& c, const StateCache& cache, EntityKind kind,
                           const std::vector<std::size_t>& entities) {
  StepPlan p{LiveSet::none(c), {}, {}};
  auto& flags = kind == EntityKind::user ? p.live.users : p.live.items;
  for (std::size_t e : entities) {
    flags[e] = 1;
    p.arrivals.emplace_back(kind, e);
    for (const auto& ev : c.sequence(kind, e).events)
      if (cache.included[ev.review]) p.reviews.push_back(ev.review);
  }
  std::sort(p.reviews.begin(), p.reviews.end());
  return p;
}

/// Builds the objective on the pass's tape.
inline std::pair<ad::Var, LossReport> build_loss(ForwardPass& fp, const DrrModel& m, const Corpus& c,
                                                 const StepPlan& plan, bool rating_only = false) {
  ad::Tape& t = fp.tape();
  const ModelConfig& cfg = m.config();
  LossReport rep;
  std::vector<ad::Var> sq;
  for (std::size_t r : plan.reviews) {
    ad::Var err = ad::add_constant(t, fp.predict(r), -c.reviews[r].rating);
    sq.push_back(ad::mul(t, err, err));
  }
  rep.ratings = sq.size();
  ad::Var mse = ad::scale(t, ad::add_n(t, sq), sq.empty() ? 0.0 : 1.0 / static_cast<double>(sq.size()));

  ad::Var arrival = t.scalar(0.0);
  if (cfg.lambda1 != 0.0 && !rating_only) {
    std::vector<ad::Var> parts;
    for (const auto& [k, e] : plan.arrivals) parts.push_back(fp.arrival_nll(k, e, &rep.arrivals));
    arrival = ad::add_n(t, parts);
    if (cfg.normalize_all_terms && rep.arrivals > 0) arrival = ad::scale(t, arrival, 1.0 / static_cast<double>(rep.arrivals));
  }

  ad::Var content = t.scalar(0.0);
  if (cfg.lambda2 != 0.0 && !rating_only && m.variant() != Variant::dynamics_only) {
    std::vector<ad::Var> parts;
    for (std::size_t r : plan.reviews) parts.push_back(ad::scale(t, fp.content_log_prob(r), -1.0));
    rep.reviews = parts.size();
    content = ad::add_n(t, parts);
    if (cfg.normalize_all_terms && rep.reviews > 0) content = ad::scale(t, content, 1.0 / static_cast<double>(rep.reviews));
  }

  ad::Var loss = total_loss(t, mse, arrival, content, {cfg.lambda1, cfg.lambda2});
  rep.total = t.scalar_value(loss);
  rep.rating_mse = t.scalar_value(mse);
  rep.arrival_nll = t.scalar_value(arrival);
  rep.content_nll = t.scalar_value(content);
  return {loss, rep};
}

struct Gradients {
  LossReport loss;
  /// One entry per differentiated parameter; untouched ones are exact zeros.
  std::map<std::string, Matrix> by_name;
};

using TrainablePredicate = std::function<bool(const Parameter&)>;

inline TrainablePredicate phase_predicate(const DrrModel& m, Phase phase) {
  return [&m, phase](const Parameter& p) {
    if (!m.configurable_trainable(p)) return false;
    const ParamGroup g = DrrModel::group_of(p);
    if (phase == Phase::users) return g != ParamGroup::item;
    if (phase == Phase::items) return g != ParamGroup::user;
    return true;
  };
}

inline Gradients compute_gradients(const DrrModel& m, const Corpus& c, const Layout& l, const StateCache& cache,
                                   const StepPlan& plan, const TrainablePredicate& trainable,
                                   bool rating_only = false) {
  ad::Tape t(true);
  t.set_trainable(trainable);
  ForwardPass fp(t, m, c, l, cache, plan.live);
  auto [loss, rep] = build_loss(fp, m, c, plan, rating_only);
  t.backward(loss);
  Gradients g;
  g.loss = rep;
  for (const Parameter* p : m.parameters()) {
    if (!trainable(*p)) continue;
    const Matrix* gp = t.gradient(*p);
    g.by_name[p->name] = gp ? *gp : Matrix::Zero(p->value.rows(), p->value.cols());
  }
  return g;
}

/// Loss value only (no tape recording).
inline LossReport evaluate_loss(const DrrModel& m, const Corpus& c, const Layout& l, const StateCache& cache,
                                const StepPlan& plan) {
  ad::Tape t(false);
  ForwardPass fp(t, m, c, l, cache, plan.live);
  return build_loss(fp, m, c, plan).second;
}

inline double split_mse(const DrrModel& m, const Corpus& c, const Layout& l, const StateCache& cache, Split s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < c.reviews.size(); ++r) {
    if (c.split_of(r) != s || !cache.included[r]) continue;
    const double e = predict_rating(m, c, l, cache, r) - c.reviews[r].rating;
    sum += e * e;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;          // mean minibatch objective
  double rating_mse = 0.0;    // mean minibatch rating MSE
  double arrival_nll = 0.0;   // per term
  double content_nll = 0.0;   // per review
  double validation_mse = std::numeric_limits<double>::quiet_NaN();
  long steps = 0;
};

inline nlohmann::json metrics_json(const EpochMetrics& m) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"epoch", m.epoch},         {"loss", num(m.loss)},
          {"rating_mse", num(m.rating_mse)}, {"arrival_nll", num(m.arrival_nll)},
          {"content_nll", num(m.content_nll)}, {"validation_mse", num(m.validation_mse)},
          {"steps", m.steps}};
}

struct StepRecord {
  int epoch = 0;
  Phase phase = Phase::users;
  long step = 0;
  LossReport loss;
};

class Trainer {
 public:
  Trainer(DrrModel& model, const Corpus& corpus)
      : model_(model), corpus_(corpus), layout_(make_layout(model, corpus)),
        adam_({model.config().learning_rate, model.config().beta1, model.config().beta2, model.config().epsilon}) {}

  /// Data-dependent initialization of a fresh model: the rating bias starts at
  /// the training mean, and pretrained word vectors are loaded when configured.
  void initialize() {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < corpus_.reviews.size(); ++r)
      if (corpus_.split_of(r) == Split::train) {
        sum += corpus_.reviews[r].rating;
        ++n;
      }
    if (n) model_.fm().w0.value(0, 0) = sum / static_cast<double>(n);
    if (uses_lm(model_.variant()) && !model_.config().embeddings_path.empty())
      load_embeddings(model_.lm(), corpus_.vocab, model_.config().embeddings_path);
  }

  void set_rating_only(bool v) { rating_only_ = v; }
  void on_step(std::function<void(const StepRecord&)> cb) { on_step_ = std::move(cb); }

  Adam& optimizer() { return adam_; }
  const Adam& optimizer() const { return adam_; }
  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }
  const Layout& layout() const { return layout_; }

  /// Runs one phase over all entities of `kind` in shuffled minibatches.
  EpochMetrics run_phase(EntityKind kind, int rep = 0) {
    const Phase phase = kind == EntityKind::user ? Phase::users : Phase::items;
    const StateCache cache = compute_cache(model_, corpus_, layout_, Split::train, /*with_content=*/false);
    std::vector<std::size_t> order;
    for (std::size_t e = 0; e < corpus_.entity_count(kind); ++e)
      if (cache.states(kind, e).size() > 1) order.push_back(e);
    Rng rng(splitmix64(model_.config().seed ^ splitmix64(static_cast<std::uint64_t>(epoch_) * 8 +
                                                         (kind == EntityKind::user ? 0 : 4) +
                                                         static_cast<std::uint64_t>(rep))));
    std::shuffle(order.begin(), order.end(), rng);
    const auto trainable = phase_predicate(model_, phase);
    const auto bs = static_cast<std::size_t>(model_.config().batch_size);
    EpochMetrics acc;
    std::size_t arrivals = 0, reviews = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      const StepPlan plan = plan_batch(corpus_, cache, kind, batch);
      Gradients g = compute_gradients(model_, corpus_, layout_, cache, plan, trainable, rating_only_);
      if (!std::isfinite(g.loss.total)) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch_ << ", " << (kind == EntityKind::user ? "user" : "item")
            << " phase, step " << adam_.step() + 1 << ": loss=" << g.loss.total << " (rating=" << g.loss.rating_mse
            << ", arrival=" << g.loss.arrival_nll << ", content=" << g.loss.content_nll << ")";
        throw std::runtime_error(msg.str());
      }
      adam_.begin_step();
      for (Parameter* p : model_.parameters()) {
        if (!trainable(*p)) continue;
        adam_.apply(*p, &g.by_name.at(p->name));
      }
      acc.loss += g.loss.total;
      acc.rating_mse += g.loss.rating_mse;
      acc.arrival_nll += model_.config().normalize_all_terms ? g.loss.arrival_nll * static_cast<double>(g.loss.arrivals)
                                                             : g.loss.arrival_nll;
      acc.content_nll += model_.config().normalize_all_terms ? g.loss.content_nll * static_cast<double>(g.loss.reviews)
                                                             : g.loss.content_nll;
      arrivals += g.loss.arrivals;
      reviews += g.loss.reviews;
      ++acc.steps;
      if (on_step_) on_step_({epoch_, phase, adam_.step(), g.loss});
    }
    if (acc.steps) {
      acc.loss /= static_cast<double>(acc.steps);
      acc.rating_mse /= static_cast<double>(acc.steps);
    }
    acc.arrival_nll = arrivals ? acc.arrival_nll / static_cast<double>(arrivals) : 0.0;
    acc.content_nll = reviews ? acc.content_nll / static_cast<double>(reviews) : 0.0;
    return acc;
  }

  /// One epoch: user phase(s), then item phase(s), then validation.
  EpochMetrics run_epoch() {
    EpochMetrics total;
    total.epoch = epoch_;
    int phases = 0;
    for (EntityKind kind : {EntityKind::user, EntityKind::item}) {
      for (int rep = 0; rep < model_.config().epochs_per_phase; ++rep) {
        EpochMetrics m = run_phase(kind, rep);
        total.loss += m.loss;
        total.rating_mse += m.rating_mse;
        total.arrival_nll += m.arrival_nll;
        total.content_nll += m.content_nll;
        total.steps += m.steps;
        ++phases;
      }
    }
    total.loss /= phases;
    total.rating_mse /= phases;
    total.arrival_nll /= phases;
    total.content_nll /= phases;
    if (!reviews_in(corpus_, Split::validation).empty()) {
      const StateCache cache = compute_cache(model_, corpus_, layout_, Split::validation, false);
      total.validation_mse = split_mse(model_, corpus_, layout_, cache, Split::validation);
    }
    ++epoch_;
    return total;
  }

  /// Trains until the configured epoch count is reached.
  std::vector<EpochMetrics> train(const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
    std::vector<EpochMetrics> out;
    while (epoch_ < model_.config().epochs) {
      out.push_back(run_epoch());
      if (on_epoch) on_epoch(out.back());
    }
    return out;
  }

 private:
  DrrModel& model_;
  const Corpus& corpus_;
  Layout layout_;
  Adam adam_;
  int epoch_ = 0;
  bool rating_only_ = false;
  std::function<void(const StepRecord&)> on_step_;
};

}  // namespace drr
