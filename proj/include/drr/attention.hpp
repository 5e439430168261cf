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

// Attention weights of tracked words across an item's reviews over time.

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drr/model.hpp"

namespace drr {

struct TimelineRecord {
  std::size_t review = 0;        // corpus review index
  std::size_t review_index = 0;  // position in the item's sequence
  double tau = 0.0;
  std::vector<double> alpha;     // per tracked word; 0 when absent
};

struct TokenWeights {
  std::size_t review_index = 0;
  std::vector<int> tokens;
  std::vector<double> alpha;
};

struct AttentionTimeline {
  std::string item_id;
  std::vector<std::string> words;
  std::vector<TimelineRecord> records;  // time order
  std::vector<TokenWeights> dump;
};

inline std::size_t find_entity(const std::vector<std::string>& ids, const std::string& id, const char* what) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) throw std::invalid_argument(std::string("unknown ") + what + " '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

/// Mean attention weight of each tracked word per review of `item_id`, using
/// every event of the corpus as history.
inline AttentionTimeline export_attention_timeline(const DrrModel& m, const Corpus& c, const std::string& item_id,
                                                   const std::vector<std::string>& words) {
  if (!uses_lm(m.variant())) throw std::invalid_argument("attention export needs a language-model variant");
  const std::size_t item = find_entity(c.item_ids, item_id, "item");
  std::vector<int> ids;
  for (const auto& w : words) {
    const int id = c.vocab.index(w);
    if (id == Vocabulary::kUnk && w != "<unk>") throw std::invalid_argument("word '" + w + "' is not in the vocabulary");
    ids.push_back(clip_token(id, m.vocab()));
  }

  const Layout l = make_layout(m, c);
  const StateCache cache = compute_cache(m, c, l, Split::test, /*with_content=*/false);
  AttentionTimeline tl;
  tl.item_id = item_id;
  tl.words = words;
  bool any = false;
  const auto& events = c.items[item].events;
  for (std::size_t k = 0; k < events.size(); ++k) {
    const std::size_t r = events[k].review;
    ad::Tape t(false);
    ForwardPass fp(t, m, c, l, cache, LiveSet::none(c));
    const auto& out = fp.lm_pass(r);
    const auto& tokens = c.reviews[r].tokens;
    TokenWeights tw{k, tokens, {}};
    if (!tokens.empty()) {
      const Vector a = t.value(out.weights).col(0);
      tw.alpha.assign(a.data(), a.data() + a.size());
    }
    TimelineRecord rec{r, k, events[k].tau, std::vector<double>(ids.size(), 0.0)};
    for (std::size_t w = 0; w < ids.size(); ++w) {
      double sum = 0.0;
      int n = 0;
      for (std::size_t j = 0; j < tokens.size(); ++j)
        if (clip_token(tokens[j], m.vocab()) == ids[w]) {
          sum += tw.alpha[j];
          ++n;
        }
      if (n) {
        rec.alpha[w] = sum / n;
        any = true;
      }
    }
    tl.records.push_back(std::move(rec));
    tl.dump.push_back(std::move(tw));
  }
  if (!any) throw std::invalid_argument("no review of item '" + item_id + "' contains a tracked word");
  return tl;
}

/// item_id,review_index,tau_days,word,alpha
inline void write_timeline_csv(const AttentionTimeline& tl, std::ostream& out) {
  out << "item_id,review_index,tau_days,word,alpha\n";
  out.precision(10);
  for (const auto& r : tl.records)
    for (std::size_t w = 0; w < tl.words.size(); ++w)
      out << tl.item_id << ',' << r.review_index << ',' << r.tau << ',' << tl.words[w] << ',' << r.alpha[w] << '\n';
}

/// item_id,review_index,position,token,alpha
inline void write_token_dump_csv(const AttentionTimeline& tl, const Vocabulary& vocab, std::ostream& out) {
  out << "item_id,review_index,position,token,alpha\n";
  out.precision(10);
  for (const auto& d : tl.dump)
    for (std::size_t j = 0; j < d.tokens.size(); ++j)
      out << tl.item_id << ',' << d.review_index << ',' << j << ',' << vocab.token(d.tokens[j]) << ',' << d.alpha[j]
          << '\n';
}

/// The tracked word's weights in time order.
inline std::vector<double> word_trajectory(const AttentionTimeline& tl, std::size_t word) {
  std::vector<double> out;
  for (const auto& r : tl.records) out.push_back(r.alpha.at(word));
  return out;
}

}  // namespace drr
