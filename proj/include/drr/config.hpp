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

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace drr {

enum class Variant { dynamics_only, drr_bow, drr_lm_causal, drr_lm_noncausal };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::dynamics_only: return "dynamics-only";
    case Variant::drr_bow: return "DRR-BoW";
    case Variant::drr_lm_causal: return "DRR-LM-C";
    case Variant::drr_lm_noncausal: return "DRR-LM-NC";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "dynamics-only") return Variant::dynamics_only;
  if (s == "DRR-BoW" || s == "drr-bow") return Variant::drr_bow;
  if (s == "DRR-LM-C" || s == "drr-lm-c") return Variant::drr_lm_causal;
  if (s == "DRR-LM-NC" || s == "drr-lm-nc") return Variant::drr_lm_noncausal;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

inline bool uses_bow(Variant v) { return v == Variant::drr_bow; }
inline bool uses_lm(Variant v) { return v == Variant::drr_lm_causal || v == Variant::drr_lm_noncausal; }

/// Every hyperparameter of a run. Defaults follow the published model configuration
/// where one exists.
struct ModelConfig {
  Variant variant = Variant::drr_bow;
  int hidden = 32;          // H, recurrent state per entity
  int event_embed = 100;    // E
  int attention = 64;       // A
  int lm_state = 64;        // S
  int fm_factors = 10;      // K
  int vocab_bow = 2000;
  int vocab_lm = 5000;
  int word_embed = 300;
  int hash_dim = 1024;      // D_hash
  int max_tokens = 150;
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda1 = 0.1;     // arrival NLL weight
  double lambda2 = 0.01;    // content NLL weight
  int batch_size = 16;
  int epochs = 10;
  int epochs_per_phase = 1;
  int bptt_window = 32;
  std::uint64_t seed = 1;
  bool normalize_all_terms = false;
  bool finetune_embeddings = false;
  bool freeze_content = false;
  std::string embeddings_path;

  void validate() const {
    auto pos = [](int v, const char* n) {
      if (v < 1) throw std::invalid_argument(std::string("config: ") + n + " must be >= 1");
    };
    pos(hidden, "hidden");
    pos(event_embed, "event_embed");
    pos(attention, "attention");
    pos(lm_state, "lm_state");
    pos(fm_factors, "fm_factors");
    pos(vocab_bow, "vocab_bow");
    pos(vocab_lm, "vocab_lm");
    pos(word_embed, "word_embed");
    pos(hash_dim, "hash_dim");
    pos(max_tokens, "max_tokens");
    pos(batch_size, "batch_size");
    pos(epochs_per_phase, "epochs_per_phase");
    pos(bptt_window, "bptt_window");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (lambda1 < 0 || lambda2 < 0) throw std::invalid_argument("config: loss weights must be non-negative");
    if (!(learning_rate > 0)) throw std::invalid_argument("config: learning_rate must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"variant", variant_name(c.variant)},
                     {"hidden", c.hidden},
                     {"event_embed", c.event_embed},
                     {"attention", c.attention},
                     {"lm_state", c.lm_state},
                     {"fm_factors", c.fm_factors},
                     {"vocab_bow", c.vocab_bow},
                     {"vocab_lm", c.vocab_lm},
                     {"word_embed", c.word_embed},
                     {"hash_dim", c.hash_dim},
                     {"max_tokens", c.max_tokens},
                     {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"epsilon", c.epsilon},
                     {"lambda1", c.lambda1},
                     {"lambda2", c.lambda2},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"epochs_per_phase", c.epochs_per_phase},
                     {"bptt_window", c.bptt_window},
                     {"seed", c.seed},
                     {"normalize_all_terms", c.normalize_all_terms},
                     {"finetune_embeddings", c.finetune_embeddings},
                     {"freeze_content", c.freeze_content},
                     {"embeddings_path", c.embeddings_path}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const ModelConfig defaults;
  nlohmann::json known;
  to_json(known, defaults);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
  c = defaults;
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) j.at(k).get_to(dst);
  };
  get("hidden", c.hidden);
  get("event_embed", c.event_embed);
  get("attention", c.attention);
  get("lm_state", c.lm_state);
  get("fm_factors", c.fm_factors);
  get("vocab_bow", c.vocab_bow);
  get("vocab_lm", c.vocab_lm);
  get("word_embed", c.word_embed);
  get("hash_dim", c.hash_dim);
  get("max_tokens", c.max_tokens);
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("epsilon", c.epsilon);
  get("lambda1", c.lambda1);
  get("lambda2", c.lambda2);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("epochs_per_phase", c.epochs_per_phase);
  get("bptt_window", c.bptt_window);
  get("seed", c.seed);
  get("normalize_all_terms", c.normalize_all_terms);
  get("finetune_embeddings", c.finetune_embeddings);
  get("freeze_content", c.freeze_content);
  get("embeddings_path", c.embeddings_path);
}

/// FNV-1a over the canonical JSON dump.
inline std::uint64_t config_hash(const ModelConfig& c) {
  const std::string s = nlohmann::json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  in >> j;
  ModelConfig c = j.get<ModelConfig>();
  c.validate();
  return c;
}

}  // namespace drr
