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

#include <cmath>
#include <map>
#include <string>

#include "drr/autodiff.hpp"

namespace drr {

struct AdamOptions {
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamOptions o = {}) : opt_(o) {}

  /// Starts a new update; call once per minibatch before apply().
  void begin_step() { ++step_; }

  /// Updates one parameter. A null gradient counts as zero.
  void apply(Parameter& p, const Matrix* grad) {
    auto& m = first_[p.name];
    auto& v = second_[p.name];
    if (m.size() == 0) {
      m = Matrix::Zero(p.value.rows(), p.value.cols());
      v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    if (grad) {
      m = opt_.beta1 * m + (1.0 - opt_.beta1) * *grad;
      v = opt_.beta2 * v + (1.0 - opt_.beta2) * grad->cwiseProduct(*grad);
    } else {
      m *= opt_.beta1;
      v *= opt_.beta2;
    }
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    p.value.array() -= opt_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + opt_.epsilon);
  }

  long step() const { return step_; }
  void set_step(long s) { step_ = s; }
  const AdamOptions& options() const { return opt_; }

  std::map<std::string, Matrix>& first_moments() { return first_; }
  std::map<std::string, Matrix>& second_moments() { return second_; }
  const std::map<std::string, Matrix>& first_moments() const { return first_; }
  const std::map<std::string, Matrix>& second_moments() const { return second_; }

 private:
  AdamOptions opt_;
  long step_ = 0;
  std::map<std::string, Matrix> first_, second_;
};

}  // namespace drr
