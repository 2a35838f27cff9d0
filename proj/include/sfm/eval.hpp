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

#include <cstddef>

#include "sfm/tensor.hpp"

namespace sfm {

struct FrechetResult {
  double value = 0.0;
  bool jittered = false;  // a covariance was singular and got 1e-8 added to its diagonal
};

/// Gaussian Frechet distance between two n x d point sets:
/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
/// Each set needs at least d + 1 rows.
FrechetResult frechet(const Tensor& a, const Tensor& b);
double frechet_distance(const Tensor& a, const Tensor& b);

/// Frechet distance between two Gaussians given by mean and covariance.
double frechet_gaussian(const Tensor& mean_a, const Tensor& cov_a, const Tensor& mean_b,
                        const Tensor& cov_b);

/// Energy distance 2 E|a - b| - E|a - a'| - E|b - b'| with U-statistics for
/// the within-set terms. Sets of size one contribute a zero within-set term.
double energy_distance(const Tensor& a, const Tensor& b);

struct MetricReport {
  double frechet = 0.0;
  double energy = 0.0;
  bool frechet_jittered = false;
  std::size_t n_generated = 0;
  std::size_t n_reference = 0;
};

MetricReport evaluate(const Tensor& generated, const Tensor& reference);

}  // namespace sfm
