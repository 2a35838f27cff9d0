// Copyright 2026 The sfmlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "sfm/tensor.hpp"

namespace sfm {

/// Counter-based random stream built on Philox4x32-10.
///
/// Every draw is a pure function of (seed, stream_id, counter), so a stream can
/// be copied, split or replayed without coordination. One counter tick yields
/// one variate: a uniform, a normal (Box-Muller, one branch) or a raw 64-bit
/// word.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  /// Child stream keyed by `index`; independent of the parent sequence.
  RngStream split(std::uint64_t index) const;
  /// Child stream keyed by a name (e.g. "train", "posterior").
  RngStream split(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Skip ahead by `n` draws without producing them.
  void advance(std::uint64_t n) { counter_ += n; }

 private:
  std::array<std::uint32_t, 4> block();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
};

/// n i.i.d. standard normal draws as a rank-1 tensor. Advances the counter by n.
Tensor gauss(RngStream& rng, std::size_t n);

/// Stable 64-bit mix used to derive child stream ids.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace sfm
