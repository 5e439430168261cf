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

#include "drr/adam.hpp"
#include "drr/attention.hpp"
#include "drr/autodiff.hpp"
#include "drr/baseline.hpp"
#include "drr/checkpoint.hpp"
#include "drr/config.hpp"
#include "drr/content.hpp"
#include "drr/corpus.hpp"
#include "drr/dynamics.hpp"
#include "drr/evaluate.hpp"
#include "drr/fusion.hpp"
#include "drr/model.hpp"
#include "drr/stats.hpp"
#include "drr/synthetic.hpp"
#include "drr/training.hpp"
