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

// Finite discrete distributions, seeded sampling and distance metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "evict/errors.hpp"

namespace evict {

using Token = std::uint32_t;

inline constexpr double kProbSumTolerance = 1e-9;

// SplitMix64 finalizer. Used for seeding and for keyed hashing.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a seed with a stream index into an independent-looking seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// xoshiro256** seeded through SplitMix64.
///
/// The stream depends only on the seed, so identical seeds replay bit-exactly
/// on every platform. An Rng has a single owner; parallel work must use
/// separately seeded instances.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    for (std::uint64_t i = 0; i < 4; ++i) {
      state_[i] = mix64(seed + i * 0x9e3779b97f4a7c15ULL);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidInput("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  // Standard normal via Box-Muller (one draw per call, the sine half is
  // discarded so the stream position stays simple to reason about).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

/// Probability vector over a finite vocabulary. Immutable after construction.
class Distribution {
 public:
  // Validates entries: finite, non-negative, summing to 1 within 1e-9.
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InvalidInput("Distribution: empty vector");
    double sum = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0) {
        throw InvalidInput("Distribution: entries must be finite and >= 0");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance) {
      throw InvalidInput("Distribution: entries sum to " +
                         std::to_string(sum));
    }
  }

  // Scales non-negative weights to sum to one.
  static Distribution normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) {
        throw InvalidInput("Distribution::normalized: bad weight");
      }
      sum += w;
    }
    if (!(sum > 0.0)) {
      throw InvalidInput("Distribution::normalized: zero total mass");
    }
    for (double& w : weights) w /= sum;
    return Distribution(std::move(weights));
  }

  static Distribution point_mass(std::size_t size, std::size_t index) {
    if (index >= size) throw InvalidInput("point_mass: index out of range");
    std::vector<double> probs(size, 0.0);
    probs[index] = 1.0;
    return Distribution(std::move(probs));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  // Lowest index among the maximal entries.
  std::size_t argmax() const noexcept {
    return static_cast<std::size_t>(
        std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Softmax of `logits / temperature`. Temperature 0 is the greedy branch: a
/// point mass on the first maximal logit.
inline Distribution softmax_temp(std::span<const double> logits,
                                 double temperature) {
  if (logits.empty()) throw InvalidInput("softmax_temp: empty logits");
  if (!std::isfinite(temperature) || temperature < 0.0) {
    throw InvalidInput("softmax_temp: temperature must be finite and >= 0");
  }
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInput("softmax_temp: non-finite logit");
  }
  const auto max_it = std::max_element(logits.begin(), logits.end());
  if (temperature == 0.0) {
    return Distribution::point_mass(
        logits.size(), static_cast<std::size_t>(max_it - logits.begin()));
  }
  const double max_logit = *max_it;
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((logits[i] - max_logit) / temperature);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return Distribution(std::move(probs));
}

// Draws an index proportionally to non-negative weights that need not be
// normalized. Zero-weight indices are never returned.
inline std::size_t sample_weights(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) {
      total += weights[i];
      last_positive = i;
    }
  }
  if (last_positive == weights.size()) {
    throw InvalidInput("sample_weights: no positive weight");
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding left u at or above the accumulated total.
  return last_positive;
}

inline std::size_t sample(const Distribution& dist, Rng& rng) {
  return sample_weights(dist.probs(), rng);
}

inline double tv_distance(const Distribution& a, const Distribution& b) {
  if (a.size() != b.size()) {
    throw InvalidInput("tv_distance: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return 0.5 * sum;
}

}  // namespace evict
