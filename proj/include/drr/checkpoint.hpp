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

// Checkpoint container:
//
//   bytes 0..7   "DRRCKPT\0"
//   u32          format version
//   u64          header length n
//   n bytes      JSON header: config, config_hash, epoch, adam_step, vocab,
//                tensors [{name, rows, cols, offset}]
//   payload      float64 values, column-major, little-endian host order
//
// Optimizer moments are stored as tensors "adam.m/<name>" and "adam.v/<name>".

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drr/adam.hpp"
#include "drr/config.hpp"
#include "drr/model.hpp"

namespace drr {

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'R', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t config_hash = 0;
  int vocab = 0;  // corpus vocabulary the model was built against
  int epoch = 0;
  long adam_step = 0;
  std::vector<NamedTensor> tensors;

  const Matrix* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  }
};

inline Checkpoint make_checkpoint(const DrrModel& m, const Adam& adam, int epoch, int corpus_vocab) {
  Checkpoint ck;
  ck.config = m.config();
  ck.config_hash = config_hash(m.config());
  ck.vocab = corpus_vocab;
  ck.epoch = epoch;
  ck.adam_step = adam.step();
  for (const Parameter* p : m.parameters()) ck.tensors.push_back({p->name, p->value});
  for (const auto& [name, v] : adam.first_moments()) ck.tensors.push_back({"adam.m/" + name, v});
  for (const auto& [name, v] : adam.second_moments()) ck.tensors.push_back({"adam.v/" + name, v});
  return ck;
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = ck.config;
  header["config_hash"] = ck.config_hash;
  header["vocab"] = ck.vocab;
  header["epoch"] = ck.epoch;
  header["adam_step"] = ck.adam_step;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    header["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value.size()) * sizeof(double);
  }
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  put(&kCheckpointVersion, sizeof(kCheckpointVersion));
  const std::uint64_t hl = h.size();
  put(&hl, sizeof(hl));
  out += h;
  for (const auto& t : ck.tensors) put(t.value.data(), static_cast<std::size_t>(t.value.size()) * sizeof(double));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint") {
  auto corrupt = [&origin](const std::string& why) { return std::runtime_error("corrupt checkpoint " + origin + ": " + why); };
  const std::size_t fixed = sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw corrupt("bad magic");
  std::uint32_t version;
  std::uint64_t hl;
  std::memcpy(&version, bytes.data() + 8, sizeof(version));
  std::memcpy(&hl, bytes.data() + 12, sizeof(hl));
  if (version != kCheckpointVersion) throw corrupt("unsupported version " + std::to_string(version));
  if (hl > bytes.size() - fixed) throw corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(fixed, hl));
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("header: ") + e.what());
  }
  const std::size_t base = fixed + hl;
  Checkpoint ck;
  try {
    ck.config = header.at("config").get<ModelConfig>();
    ck.config_hash = header.at("config_hash").get<std::uint64_t>();
    ck.vocab = header.at("vocab").get<int>();
    ck.epoch = header.at("epoch").get<int>();
    ck.adam_step = header.at("adam_step").get<long>();
    std::uint64_t expected = 0;
    for (const auto& t : header.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (rows < 0 || cols < 0 || offset != expected) throw corrupt("bad tensor entry " + nt.name);
      const std::uint64_t n = static_cast<std::uint64_t>(rows * cols) * sizeof(double);
      if (base + offset + n > bytes.size()) throw corrupt("payload truncated at " + nt.name);
      nt.value.resize(rows, cols);
      std::memcpy(nt.value.data(), bytes.data() + base + offset, n);
      expected += n;
      ck.tensors.push_back(std::move(nt));
    }
    if (base + expected != bytes.size()) throw corrupt("trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw corrupt(e.what());
  }
  if (config_hash(ck.config) != ck.config_hash)
    std::cerr << "warning: " << origin << ": stored config hash does not match its config\n";
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path);
}

/// Copies checkpoint tensors into an existing model. Every model parameter
/// must be present with the same shape.
inline void restore_parameters(DrrModel& m, const Checkpoint& ck) {
  if (config_hash(m.config()) != ck.config_hash)
    std::cerr << "warning: checkpoint config hash differs from the model's config\n";
  for (Parameter* p : m.parameters()) {
    const Matrix* v = ck.find(p->name);
    if (!v) throw std::runtime_error("checkpoint is missing tensor " + p->name);
    if (v->rows() != p->value.rows() || v->cols() != p->value.cols())
      throw std::runtime_error("shape mismatch for tensor " + p->name + ": checkpoint " + std::to_string(v->rows()) +
                               "x" + std::to_string(v->cols()) + ", model " + std::to_string(p->value.rows()) + "x" +
                               std::to_string(p->value.cols()));
    p->value = *v;
  }
}

inline void restore_optimizer(Adam& adam, const Checkpoint& ck) {
  adam.set_step(ck.adam_step);
  adam.first_moments().clear();
  adam.second_moments().clear();
  for (const auto& t : ck.tensors) {
    if (t.name.rfind("adam.m/", 0) == 0) adam.first_moments()[t.name.substr(7)] = t.value;
    if (t.name.rfind("adam.v/", 0) == 0) adam.second_moments()[t.name.substr(7)] = t.value;
  }
}

inline DrrModel model_from_checkpoint(const Checkpoint& ck) {
  DrrModel m(ck.config, ck.vocab);
  restore_parameters(m, ck);
  return m;
}

}  // namespace drr
