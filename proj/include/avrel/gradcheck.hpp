// Copyright 2026 The avrel Authors
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

// Finite-difference sweeps over the op catalog and the full training loss.
// Each op case reduces the output against a fixed random weighting so that
// every output coordinate contributes to the gradient.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avrel/model.hpp"
#include "avrel/tensor.hpp"

namespace avrel {

struct OpGradResult {
  std::string name;
  double max_rel_error = 0.0;
  bool differentiable = true;
};

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                     double min_abs = 0.0);

// Max relative error of sum(op(leaves) * w) for a seeded random weighting w.
double check_op(std::vector<Tensor> leaves, const std::function<Tensor(std::vector<Tensor>&)>& op,
                std::uint64_t seed);

std::vector<OpGradResult> catalog_gradchecks(std::uint64_t seed);

// Model small enough for finite differences over every parameter.
ModelConfig tiny_model_config(ModelVariant variant = ModelVariant::kRelScore);

// Joint CTC/attention loss on a 4-frame, 2-token instance, checked against
// central differences over every parameter.
double model_loss_gradcheck(std::uint64_t seed, ModelVariant variant = ModelVariant::kRelScore);

}  // namespace avrel
