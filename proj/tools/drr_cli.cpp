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

// drr: prepare corpora, train, evaluate and inspect review-based recommenders.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drr/drr.hpp"

namespace {

using namespace drr;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  open_out(path) << j.dump(2) << "\n";
}

void require_vocab(const Checkpoint& ck, const Corpus& c) {
  if (ck.vocab != c.vocab.size())
    throw std::runtime_error("checkpoint was built for a vocabulary of " + std::to_string(ck.vocab) +
                             " entries, corpus has " + std::to_string(c.vocab.size()));
}

struct PrepareArgs {
  std::string input, output;
  int min_days = 5, max_tokens = 150, vocab = 5000;
  double train = 0.8, validation = 0.1;
  std::uint64_t seed = 0x5eed;
};

int run_prepare(const PrepareArgs& a) {
  if (a.train + a.validation > 1.0) throw std::invalid_argument("--train plus --validation exceeds 1");
  const IngestResult raw = ingest(a.input);
  SequenceOptions opt;
  opt.min_days = a.min_days;
  opt.max_tokens = a.max_tokens;
  opt.vocab_size = a.vocab;
  opt.hash_seed = a.seed;
  Corpus c = build_sequences(raw.reviews, opt);
  c.skipped_lines = raw.skipped;
  c.split = temporal_split(c, a.train, a.validation, 1.0 - a.train - a.validation);
  save_corpus(c, a.output);
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t r = 0; r < c.reviews.size(); ++r) ++counts[static_cast<int>(c.split_of(r))];
  std::cerr << "read " << raw.reviews.size() << " reviews (" << raw.skipped << " malformed lines skipped); kept "
            << c.reviews.size() << " from " << c.users.size() << " users and " << c.items.size() << " items; vocab "
            << c.vocab.size() << "; train/validation/test " << counts[0] << "/" << counts[1] << "/" << counts[2]
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, config, output, metrics, resume, variant;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  const Corpus c = load_corpus(a.corpus);
  std::optional<Checkpoint> ck;
  ModelConfig cfg;
  if (!a.resume.empty()) {
    ck = load_checkpoint(a.resume);
    require_vocab(*ck, c);
    cfg = ck->config;
    if (a.seed && *a.seed != cfg.seed) throw std::runtime_error("--seed differs from the resumed checkpoint's seed");
    if (!a.variant.empty() && parse_variant(a.variant) != cfg.variant)
      throw std::runtime_error("--variant differs from the resumed checkpoint's variant");
  } else {
    if (a.config.empty()) throw std::runtime_error("train needs --config or --resume");
    cfg = load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (!a.variant.empty()) cfg.variant = parse_variant(a.variant);
  }
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();

  DrrModel m(cfg, c.vocab.size());
  Trainer tr(m, c);
  if (ck) {
    restore_parameters(m, *ck);
    restore_optimizer(tr.optimizer(), *ck);
    tr.set_epoch(ck->epoch);
  } else {
    tr.initialize();
  }

  std::ofstream log;
  if (!a.metrics.empty()) log = open_out(a.metrics);
  tr.train([&](const EpochMetrics& e) {
    const std::string line = metrics_json(e).dump();
    if (log.is_open()) log << line << "\n" << std::flush;
    std::cerr << line << "\n";
    save_checkpoint(make_checkpoint(m, tr.optimizer(), tr.epoch(), c.vocab.size()), a.output);
  });
  // Also written when no epoch ran, so the output always holds the final state.
  save_checkpoint(make_checkpoint(m, tr.optimizer(), tr.epoch(), c.vocab.size()), a.output);
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint, corpus, split = "test", output, baseline;
  int mf_rank = 0;
  std::uint64_t seed = 1;
};

int run_evaluate(const EvaluateArgs& a) {
  const Corpus c = load_corpus(a.corpus);
  const Split split = parse_split(a.split);
  if (a.baseline == "mf") {
    MfOptions o;
    o.rank = a.mf_rank;
    o.seed = a.seed;
    nlohmann::json j = report_json(static_mf_baseline(c, o, split));
    j["model"] = "static-mf";
    write_json(j, a.output);
    return 0;
  }
  if (a.checkpoint.empty()) throw std::runtime_error("evaluate needs --checkpoint or --baseline mf");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  require_vocab(ck, c);
  const DrrModel m = model_from_checkpoint(ck);
  nlohmann::json j = report_json(evaluate(m, c, split));
  j["model"] = variant_name(m.variant());
  j["epoch"] = ck.epoch;
  write_json(j, a.output);
  return 0;
}

struct AttentionArgs {
  std::string checkpoint, corpus, item, output, dump;
  std::vector<std::string> words;
  std::uint64_t seed = 1;
};

int run_attention(const AttentionArgs& a) {
  const Corpus c = load_corpus(a.corpus);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  require_vocab(ck, c);
  const DrrModel m = model_from_checkpoint(ck);
  const AttentionTimeline tl = export_attention_timeline(m, c, a.item, a.words);
  if (a.output.empty() || a.output == "-") {
    write_timeline_csv(tl, std::cout);
  } else {
    std::ofstream out = open_out(a.output);
    write_timeline_csv(tl, out);
  }
  if (!a.dump.empty()) {
    std::ofstream out = open_out(a.dump);
    write_token_dump_csv(tl, c.vocab, out);
  }
  return 0;
}

struct SynthArgs {
  std::string spec, output, truth, raw;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a) {
  SyntheticSpec s;
  if (!a.spec.empty()) {
    std::ifstream in(a.spec);
    if (!in) throw std::runtime_error("cannot open spec " + a.spec);
    s = nlohmann::json::parse(in).get<SyntheticSpec>();
  }
  if (a.seed) s.seed = *a.seed;
  const SyntheticFixture fx = gen_synthetic(s);
  save_corpus(fx.corpus, a.output);
  if (!a.truth.empty()) write_json(fx.truth, a.truth);
  if (!a.raw.empty()) open_out(a.raw) << synthetic_jsonl(fx);
  std::cerr << "generated " << fx.corpus.reviews.size() << " reviews from " << fx.corpus.users.size() << " users and "
            << fx.corpus.items.size() << " items\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic review-based recommender: corpus preparation, training, evaluation and attention export"};
  app.require_subcommand(1);

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "Raw JSON-lines reviews to a corpus bundle");
  prepare->add_option("--input", pa.input, "JSON-lines file with reviewerID, asin, overall, unixReviewTime, reviewText")
      ->required()
      ->check(CLI::ExistingFile);
  prepare->add_option("--output", pa.output, "Corpus bundle (JSON) to write")->required();
  prepare->add_option("--min-days", pa.min_days, "Drop users and items with fewer distinct review days")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  prepare->add_option("--max-tokens", pa.max_tokens, "Truncate review texts to this many tokens")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  prepare->add_option("--vocab", pa.vocab, "Vocabulary size, special tokens included")
      ->capture_default_str()
      ->check(CLI::Range(5, 1 << 24));
  prepare->add_option("--train", pa.train, "Fraction of reviews in the training split")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  prepare->add_option("--validation", pa.validation, "Fraction of reviews in the validation split")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  prepare->add_option("--seed", pa.seed, "Seed of the rating-history feature hash")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint plus a JSON-lines metrics log");
  train->add_option("--corpus", ta.corpus, "Corpus bundle from prepare or synth")->required()->check(CLI::ExistingFile);
  train->add_option("--config", ta.config, "Model and training configuration (JSON)")->check(CLI::ExistingFile);
  train->add_option("--output", ta.output, "Checkpoint to write after every epoch")->required();
  train->add_option("--metrics", ta.metrics, "JSON-lines file receiving one record per epoch");
  train->add_option("--resume", ta.resume, "Continue from this checkpoint (parameters, optimizer and epoch)")
      ->check(CLI::ExistingFile);
  train->add_option("--epochs", ta.epochs, "Override the total epoch count")->check(CLI::NonNegativeNumber);
  train->add_option("--variant", ta.variant, "Override the variant: dynamics-only, DRR-BoW, DRR-LM-C or DRR-LM-NC");
  train->add_option("--seed", ta.seed, "Override the configuration seed");

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Metrics JSON for one split");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint from train")->check(CLI::ExistingFile);
  eval->add_option("--corpus", ea.corpus, "Corpus bundle the checkpoint was trained on")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--split", ea.split, "train, validation or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "validation", "test"}));
  eval->add_option("--output", ea.output, "Metrics file; standard output when omitted");
  eval->add_option("--baseline", ea.baseline, "Evaluate a static baseline instead of a checkpoint")
      ->check(CLI::IsMember({"mf"}));
  eval->add_option("--mf-rank", ea.mf_rank, "Factor rank of the static baseline")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--seed", ea.seed, "Seed of the static baseline initialization")->capture_default_str();

  AttentionArgs aa;
  auto* attention = app.add_subcommand("attention", "Per-review attention weights of tracked words, as CSV");
  attention->add_option("--checkpoint", aa.checkpoint, "Checkpoint of a DRR-LM variant")
      ->required()
      ->check(CLI::ExistingFile);
  attention->add_option("--corpus", aa.corpus, "Corpus bundle")->required()->check(CLI::ExistingFile);
  attention->add_option("--item", aa.item, "Item id")->required();
  attention->add_option("--words", aa.words, "Tracked words")->required()->delimiter(',');
  attention->add_option("--output", aa.output, "Timeline CSV; standard output when omitted");
  attention->add_option("--dump", aa.dump, "Per-token weight CSV of every review of the item");
  attention->add_option("--seed", aa.seed, "Accepted for uniformity; the export is deterministic")
      ->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Planted-structure corpus with its ground truth");
  synth->add_option("--spec", sa.spec, "Generator parameters (JSON); defaults when omitted")->check(CLI::ExistingFile);
  synth->add_option("--output", sa.output, "Corpus bundle to write")->required();
  synth->add_option("--truth", sa.truth, "Planted parameters (JSON)");
  synth->add_option("--raw", sa.raw, "Same reviews as raw JSON lines");
  synth->add_option("--seed", sa.seed, "Override the spec seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*prepare) return run_prepare(pa);
    if (*train) return run_train(ta);
    if (*eval) return run_evaluate(ea);
    if (*attention) return run_attention(aa);
    if (*synth) return run_synth(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
