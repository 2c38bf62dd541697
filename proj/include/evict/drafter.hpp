// Copyright 2026 The evict-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "evict/distribution.hpp"
#include "evict/errors.hpp"
#include "evict/moe_target.hpp"

namespace evict {

/// Draft model with a calibration knob.
///
/// draft_dist = normalize(alpha * p_target(T=1) + (1 - alpha) * noise), where
/// noise is softmax(noise_scale * z) and z is a standard normal vector keyed
/// by the last `context_order` tokens. alpha = 1 reproduces the target
/// exactly; lower alpha gives flatter, context-dependently wrong drafts.
///
/// Holds a reference to the target, which must outlive the drafter.
class Drafter {
 public:
  Drafter(const MoETarget& target, double alpha, std::uint64_t noise_seed,
          double noise_scale = 1.0)
      : target_(&target),
        alpha_(alpha),
        noise_seed_(noise_seed),
        noise_scale_(noise_scale) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ConfigError("Drafter: alpha must lie in [0, 1]");
    }
    if (!std::isfinite(noise_scale) || noise_scale < 0.0) {
      throw ConfigError("Drafter: noise_scale must be finite and >= 0");
    }
  }

  const MoETarget& target() const noexcept { return *target_; }
  double alpha() const noexcept { return alpha_; }
  std::uint64_t noise_seed() const noexcept { return noise_seed_; }
  double noise_scale() const noexcept { return noise_scale_; }

  Distribution draft_dist(std::span<const Token> context) const {
    Distribution p = target_->target_dist(context, 1.0);
    if (alpha_ == 1.0) return p;
    const Distribution noise = perturbation(context);
    std::vector<double> mixed(p.size());
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      mixed[i] = alpha_ * p[i] + (1.0 - alpha_) * noise[i];
    }
    return Distribution::normalized(std::move(mixed));
  }

  // The seeded miscalibration component on its own.
  Distribution perturbation(std::span<const Token> context) const {
    if (context.empty()) throw InvalidInput("perturbation: empty context");
    const std::size_t window =
        std::min(context.size(), target_->config().context_order);
    std::uint64_t key = mix64(noise_seed_ ^ 0x5bd1e9955bd1e995ULL);
    for (std::size_t back = 0; back < window; ++back) {
      key = mix64(key ^ (context[context.size() - 1 - back] + 1));
    }
    Rng rng(key);
    std::vector<double> logits(target_->vocab_size());
    for (double& x : logits) x = noise_scale_ * rng.normal();
    return softmax_temp(logits, 1.0);
  }

 private:
  const MoETarget* target_;
  double alpha_;
  std::uint64_t noise_seed_;
  double noise_scale_;
};

}  // namespace evict
