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

// Review corpus: ingestion of JSON-lines dumps, day-granular user and item
// review sequences, vocabulary, signed feature hashing and the temporal
// train/validation/test split.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drr/autodiff.hpp"

namespace drr {

struct RawReview {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  std::string text;
};

struct IngestResult {
  std::vector<RawReview> reviews;
  std::size_t skipped = 0;
};

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Parses one JSON-lines record. Returns false when the line is malformed.
inline bool parse_review_line(const std::string& line, RawReview& out) {
  const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return false;
  auto str = [&](const char* key, std::string& dst) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return false;
    dst = it->get<std::string>();
    return true;
  };
  RawReview r;
  if (!str("reviewerID", r.user_id) || !str("asin", r.item_id)) return false;
  if (r.user_id.empty() || r.item_id.empty()) return false;
  auto overall = j.find("overall");
  if (overall == j.end() || !overall->is_number()) return false;
  r.rating = overall->get<double>();
  if (!(r.rating >= 1.0 && r.rating <= 5.0)) return false;
  auto ts = j.find("unixReviewTime");
  if (ts == j.end() || !ts->is_number_integer()) return false;
  r.timestamp = ts->get<std::int64_t>();
  if (r.timestamp < 0) return false;
  // A handful of 5-core records carry no text at all; keep them as empty reviews.
  auto text = j.find("reviewText");
  if (text != j.end()) {
    if (!text->is_string()) return false;
    r.text = to_lower(text->get<std::string>());
  }
  out = std::move(r);
  return true;
}

/// Reads one review per line. Malformed lines are skipped and counted.
inline IngestResult ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  IngestResult res;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RawReview r;
    if (parse_review_line(line, r)) {
      res.reviews.push_back(std::move(r));
    } else {
      ++res.skipped;
    }
  }
  if (res.reviews.empty()) throw std::runtime_error("no records in " + path);
  return res;
}

/// Lowercase split on whitespace and punctuation; '_' and non-ASCII bytes are word characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary() : tokens_{"<pad>", "<unk>", "<bos>", "<eos>"} { reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kReserved) throw std::invalid_argument("vocabulary misses reserved tokens");
    reindex();
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(int i) const { return tokens_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(index(w));
    return ids;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Keeps the (V - reserved) most frequent tokens; ties go to the lexicographically smaller token.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& texts, int V) {
  if (V <= Vocabulary::kReserved) throw std::invalid_argument("vocabulary size must exceed the reserved tokens");
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts)
    for (const auto& w : t) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = Vocabulary().tokens();
  const auto keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(V - Vocabulary::kReserved));
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(std::move(tokens));
}

/// Maps indices of a frequency-ordered vocabulary onto its size-V prefix.
inline int clip_token(int id, int V) { return id < V ? id : Vocabulary::kUnk; }

/// Raw token counts; indices at or beyond V land in the unknown slot.
inline Vector bow_vector(const std::vector<int>& tokens, int V) {
  Vector counts = Vector::Zero(V);
  for (int id : tokens) counts(clip_token(id, V)) += 1.0;
  return counts;
}

// ---------------------------------------------------------------------------
// Feature hashing

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Signed hashing of sparse non-negative indices into `dim` buckets.
class FeatureHasher {
 public:
  FeatureHasher(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 1) throw std::invalid_argument("hash dimension must be positive");
  }

  int dim() const { return dim_; }

  int bucket(std::uint64_t index) const {
    return static_cast<int>(splitmix64(seed_ ^ splitmix64(index)) % static_cast<std::uint64_t>(dim_));
  }

  double sign(std::uint64_t index) const {
    return (splitmix64(~seed_ ^ splitmix64(index + 0x632be59bd9b4e019ULL)) >> 63) ? -1.0 : 1.0;
  }

  std::vector<ad::SparseEntry> hash(const std::vector<std::pair<std::uint64_t, double>>& entries) const {
    std::vector<ad::SparseEntry> out;
    out.reserve(entries.size());
    for (const auto& [i, v] : entries) out.push_back({bucket(i), sign(i) * v});
    return out;
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

struct HashedRatingVector {
  int dim = 0;
  Vector values;
};

inline HashedRatingVector hash_ratings(const std::vector<std::pair<std::uint64_t, double>>& entries, int dim,
                                       std::uint64_t seed) {
  FeatureHasher h(dim, seed);
  HashedRatingVector out{dim, Vector::Zero(dim)};
  for (const auto& e : h.hash(entries)) out.values(e.index) += e.value;
  return out;
}

// ---------------------------------------------------------------------------
// Sequences

enum class EntityKind { user, item };
enum class Split { train, validation, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

struct Review {
  std::size_t user = 0;
  std::size_t item = 0;
  double tau = 0.0;
  double rating = 0.0;
  std::vector<int> tokens;
};

/// One entry of a user or item sequence. Text lives in the referenced Review.
struct ReviewEvent {
  std::size_t review = 0;
  double tau = 0.0;
  double delta = 0.0;
  double rating = 0.0;
  std::size_t counterpart = 0;
};

struct ReviewSequence {
  EntityKind kind = EntityKind::user;
  std::string entity_id;
  std::vector<ReviewEvent> events;
};

/// Events with tau <= train_end are training, <= validation_end validation, the rest test.
struct SplitThresholds {
  double train_end = std::numeric_limits<double>::infinity();
  double validation_end = std::numeric_limits<double>::infinity();

  Split classify(double tau) const {
    if (tau <= train_end) return Split::train;
    if (tau <= validation_end) return Split::validation;
    return Split::test;
  }
};

struct Corpus {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<Review> reviews;
  std::vector<ReviewSequence> users;
  std::vector<ReviewSequence> items;
  Vocabulary vocab;
  std::uint64_t hash_seed = 0;
  SplitThresholds split;
  std::size_t skipped_lines = 0;

  // position of each review inside its user and item sequence
  std::vector<std::size_t> user_pos;
  std::vector<std::size_t> item_pos;

  const ReviewSequence& sequence(EntityKind k, std::size_t e) const {
    return k == EntityKind::user ? users.at(e) : items.at(e);
  }
  std::size_t entity_count(EntityKind k) const { return k == EntityKind::user ? users.size() : items.size(); }
  std::size_t position(EntityKind k, std::size_t review) const {
    return k == EntityKind::user ? user_pos.at(review) : item_pos.at(review);
  }
  Split split_of(std::size_t review) const { return split.classify(reviews.at(review).tau); }
};

/// A review with its time already expressed in days. Input to assemble_corpus.
struct TimedReview {
  std::string user_id;
  std::string item_id;
  double tau = 0.0;
  double rating = 0.0;
  std::vector<std::string> words;
};

struct SequenceOptions {
  int min_days = 5;
  int max_tokens = 150;
  int vocab_size = 5000;
  std::uint64_t hash_seed = 0x5eed;
};

namespace detail {

inline void fill_sequence(ReviewSequence& seq) {
  double prev = 0.0;  // first gap is measured from the dataset origin
  for (auto& ev : seq.events) {
    ev.delta = ev.tau - prev;
    prev = ev.tau;
  }
}

}  // namespace detail

/// Drops entities with fewer than `min_days` distinct review times, repeating
/// until no removal cascades, then builds index-based sequences sorted by time.
/// Reviews sharing a time keep their input order.
inline Corpus assemble_corpus(std::vector<TimedReview> input, const SequenceOptions& opt) {
  if (input.empty()) throw std::invalid_argument("no reviews to assemble");
  std::vector<char> keep(input.size(), 1);
  for (bool changed = true; changed;) {
    changed = false;
    std::unordered_map<std::string, std::set<double>> udays, idays;
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (!keep[i]) continue;
      udays[input[i].user_id].insert(input[i].tau);
      idays[input[i].item_id].insert(input[i].tau);
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (!keep[i]) continue;
      if (static_cast<int>(udays[input[i].user_id].size()) < opt.min_days ||
          static_cast<int>(idays[input[i].item_id].size()) < opt.min_days) {
        keep[i] = 0;
        changed = true;
      }
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < input.size(); ++i)
    if (keep[i]) order.push_back(i);
  if (order.empty()) throw std::runtime_error("filtering removed every review");
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return input[a].tau < input[b].tau; });

  Corpus c;
  c.hash_seed = opt.hash_seed;
  std::set<std::string> uset, iset;
  std::vector<std::vector<std::string>> texts;
  for (std::size_t i : order) {
    uset.insert(input[i].user_id);
    iset.insert(input[i].item_id);
    auto& w = input[i].words;
    if (static_cast<int>(w.size()) > opt.max_tokens) w.resize(static_cast<std::size_t>(opt.max_tokens));
    texts.push_back(w);
  }
  c.vocab = build_vocab(texts, opt.vocab_size);
  c.user_ids.assign(uset.begin(), uset.end());
  c.item_ids.assign(iset.begin(), iset.end());
  std::unordered_map<std::string, std::size_t> uidx, iidx;
  for (std::size_t i = 0; i < c.user_ids.size(); ++i) uidx[c.user_ids[i]] = i;
  for (std::size_t i = 0; i < c.item_ids.size(); ++i) iidx[c.item_ids[i]] = i;

  c.users.resize(c.user_ids.size());
  c.items.resize(c.item_ids.size());
  for (std::size_t i = 0; i < c.users.size(); ++i) c.users[i] = {EntityKind::user, c.user_ids[i], {}};
  for (std::size_t i = 0; i < c.items.size(); ++i) c.items[i] = {EntityKind::item, c.item_ids[i], {}};
  c.user_pos.resize(order.size());
  c.item_pos.resize(order.size());

  for (std::size_t i : order) {
    const auto& in = input[i];
    Review r;
    r.user = uidx.at(in.user_id);
    r.item = iidx.at(in.item_id);
    r.tau = in.tau;
    r.rating = in.rating;
    r.tokens = c.vocab.encode(in.words);
    const std::size_t rid = c.reviews.size();
    c.user_pos[rid] = c.users[r.user].events.size();
    c.item_pos[rid] = c.items[r.item].events.size();
    c.users[r.user].events.push_back({rid, r.tau, 0.0, r.rating, r.item});
    c.items[r.item].events.push_back({rid, r.tau, 0.0, r.rating, r.user});
    c.reviews.push_back(std::move(r));
  }
  for (auto& s : c.users) detail::fill_sequence(s);
  for (auto& s : c.items) detail::fill_sequence(s);
  return c;
}

/// Whole days since the earliest timestamp in `reviews`.
inline std::vector<double> day_offsets(const std::vector<RawReview>& reviews) {
  std::int64_t t0 = std::numeric_limits<std::int64_t>::max();
  for (const auto& r : reviews) t0 = std::min(t0, r.timestamp);
  std::vector<double> tau;
  tau.reserve(reviews.size());
  for (const auto& r : reviews) tau.push_back(static_cast<double>((r.timestamp - t0) / 86400));
  return tau;
}

inline Corpus build_sequences(const std::vector<RawReview>& reviews, const SequenceOptions& opt = {}) {
  if (reviews.empty()) throw std::invalid_argument("no reviews");
  const auto tau = day_offsets(reviews);
  std::vector<TimedReview> timed;
  timed.reserve(reviews.size());
  for (std::size_t i = 0; i < reviews.size(); ++i)
    timed.push_back({reviews[i].user_id, reviews[i].item_id, tau[i], reviews[i].rating, tokenize(reviews[i].text)});
  return assemble_corpus(std::move(timed), opt);
}

/// Global time thresholds holding roughly the given fractions of reviews.
/// Reviews tied at a boundary fall into the earlier split.
inline SplitThresholds temporal_split(const std::vector<double>& taus, double train = 0.8, double validation = 0.1,
                                      double test = 0.1) {
  if (std::abs(train + validation + test - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
  if (taus.empty()) throw std::invalid_argument("no events to split");
  std::vector<double> sorted = taus;
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<long long>(sorted.size());
  auto kth = [&](double frac, long long lo) {
    long long k = std::llround(frac * static_cast<double>(n));
    return std::clamp(k, lo, n);
  };
  const long long k1 = kth(train, 1);
  const long long k2 = kth(train + validation, k1);
  SplitThresholds s;
  s.train_end = sorted[static_cast<std::size_t>(k1 - 1)];
  s.validation_end = sorted[static_cast<std::size_t>(k2 - 1)];
  return s;
}

inline SplitThresholds temporal_split(const Corpus& c, double train = 0.8, double validation = 0.1,
                                      double test = 0.1) {
  std::vector<double> taus;
  taus.reserve(c.reviews.size());
  for (const auto& r : c.reviews) taus.push_back(r.tau);
  return temporal_split(taus, train, validation, test);
}

inline std::vector<std::size_t> reviews_in(const Corpus& c, Split s) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < c.reviews.size(); ++r)
    if (c.split_of(r) == s) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus bundle (JSON)

inline nlohmann::json corpus_to_json(const Corpus& c) {
  nlohmann::json j;
  j["format"] = "drr-corpus";
  j["version"] = 1;
  j["hash_seed"] = c.hash_seed;
  j["skipped_lines"] = c.skipped_lines;
  j["vocabulary"] = c.vocab.tokens();
  j["users"] = c.user_ids;
  j["items"] = c.item_ids;
  auto bound = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  j["split"] = {{"train_end", bound(c.split.train_end)}, {"validation_end", bound(c.split.validation_end)}};
  auto& rs = j["reviews"] = nlohmann::json::array();
  for (const auto& r : c.reviews)
    rs.push_back({{"user", r.user}, {"item", r.item}, {"tau", r.tau}, {"rating", r.rating}, {"tokens", r.tokens}});
  return j;
}

/// Rebuilds a bundle. Sequences are derived from the review table, which is
/// stored in time order.
inline Corpus corpus_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "drr-corpus") throw std::runtime_error("not a drr-corpus bundle");
  Corpus c;
  c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
  c.skipped_lines = j.value("skipped_lines", std::size_t{0});
  c.vocab = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
  c.user_ids = j.at("users").get<std::vector<std::string>>();
  c.item_ids = j.at("items").get<std::vector<std::string>>();
  auto bound = [](const nlohmann::json& x) {
    return x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>();
  };
  c.split.train_end = bound(j.at("split").at("train_end"));
  c.split.validation_end = bound(j.at("split").at("validation_end"));
  c.users.resize(c.user_ids.size());
  c.items.resize(c.item_ids.size());
  for (std::size_t i = 0; i < c.users.size(); ++i) c.users[i] = {EntityKind::user, c.user_ids[i], {}};
  for (std::size_t i = 0; i < c.items.size(); ++i) c.items[i] = {EntityKind::item, c.item_ids[i], {}};
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& jr : j.at("reviews")) {
    Review r;
    r.user = jr.at("user").get<std::size_t>();
    r.item = jr.at("item").get<std::size_t>();
    r.tau = jr.at("tau").get<double>();
    r.rating = jr.at("rating").get<double>();
    r.tokens = jr.at("tokens").get<std::vector<int>>();
    if (r.user >= c.users.size() || r.item >= c.items.size()) throw std::runtime_error("review references unknown entity");
    if (r.tau < last) throw std::runtime_error("reviews not in time order");
    for (int t : r.tokens)
      if (t < 0 || t >= c.vocab.size()) throw std::runtime_error("token index out of range");
    last = r.tau;
    const std::size_t rid = c.reviews.size();
    c.user_pos.push_back(c.users[r.user].events.size());
    c.item_pos.push_back(c.items[r.item].events.size());
    c.users[r.user].events.push_back({rid, r.tau, 0.0, r.rating, r.item});
    c.items[r.item].events.push_back({rid, r.tau, 0.0, r.rating, r.user});
    c.reviews.push_back(std::move(r));
  }
  for (auto& s : c.users) detail::fill_sequence(s);
  for (auto& s : c.items) detail::fill_sequence(s);
  return c;
}

inline void save_corpus(const Corpus& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << corpus_to_json(c).dump() << '\n';
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt corpus bundle " + path + ": " + e.what());
  }
  return corpus_from_json(j);
}

}  // namespace drr
