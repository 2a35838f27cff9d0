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

#include "sfm/eval.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace sfm {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_matrix(const Tensor& x) {
  const Tensor m = x.rank() == 1 ? x.reshaped({x.size(), 1}) : x;
  Mat out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m.at(r, c);
  }
  return out;
}

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_core(const Vec& mu_a, const Mat& cov_a, const Vec& mu_b, const Mat& cov_b) {
  const Mat sa = psd_sqrt(cov_a);
  const Mat cross = psd_sqrt(sa * cov_b * sa);
  const double v = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
                   2.0 * cross.trace();
  return std::max(v, 0.0);
}

bool is_singular(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() <= 1e-12 * scale;
}

void check_points(const Tensor& x, std::size_t d, const char* name) {
  if (x.rows() < d + 1) {
    throw DimensionError(std::string("frechet: set ") + name + " needs at least d + 1 points");
  }
}

}  // namespace

FrechetResult frechet(const Tensor& a, const Tensor& b) {
  const Mat A = to_matrix(a), B = to_matrix(b);
  if (A.cols() != B.cols()) throw DimensionError("frechet: dimension mismatch");
  const auto d = static_cast<std::size_t>(A.cols());
  check_points(a.rank() == 1 ? a.reshaped({a.size(), 1}) : a, d, "A");
  check_points(b.rank() == 1 ? b.reshaped({b.size(), 1}) : b, d, "B");

  auto moments = [](const Mat& X, Vec& mu, Mat& cov) {
    mu = X.colwise().mean().transpose();
    const Mat c = X.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(X.rows() - 1);
  };
  Vec mu_a, mu_b;
  Mat cov_a, cov_b;
  moments(A, mu_a, cov_a);
  moments(B, mu_b, cov_b);

  FrechetResult out;
  if (is_singular(cov_a) || is_singular(cov_b)) {
    out.jittered = true;
    cov_a.diagonal().array() += 1e-8;
    cov_b.diagonal().array() += 1e-8;
  }
  out.value = frechet_core(mu_a, cov_a, mu_b, cov_b);
  return out;
}

double frechet_distance(const Tensor& a, const Tensor& b) { return frechet(a, b).value; }

double frechet_gaussian(const Tensor& mean_a, const Tensor& cov_a, const Tensor& mean_b,
                        const Tensor& cov_b) {
  const std::size_t d = mean_a.size();
  if (mean_b.size() != d || cov_a.size() != d * d || cov_b.size() != d * d) {
    throw DimensionError("frechet_gaussian: shape mismatch");
  }
  Vec ma(d), mb(d);
  Mat ca(d, d), cb(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    ma(i) = mean_a.data()[i];
    mb(i) = mean_b.data()[i];
    for (std::size_t j = 0; j < d; ++j) {
      ca(i, j) = cov_a.data()[i * d + j];
      cb(i, j) = cov_b.data()[i * d + j];
    }
  }
  return frechet_core(ma, ca, mb, cb);
}

double energy_distance(const Tensor& a, const Tensor& b) {
  const Tensor A = a.rank() == 1 ? a.reshaped({a.size(), 1}) : a;
  const Tensor B = b.rank() == 1 ? b.reshaped({b.size(), 1}) : b;
  if (A.rows() == 0 || B.rows() == 0) throw DimensionError("energy_distance: empty set");
  if (A.cols() != B.cols()) throw DimensionError("energy_distance: dimension mismatch");
  const std::size_t d = A.cols();
  auto dist = [d](std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
    return std::sqrt(s);
  };
  auto within = [&](const Tensor& X) {
    const std::size_t n = X.rows();
    if (n < 2) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) s += dist(X.row(i), X.row(j));
    }
    return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
  };
  double cross = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < B.rows(); ++j) cross += dist(A.row(i), B.row(j));
  }
  cross /= static_cast<double>(A.rows()) * static_cast<double>(B.rows());
  return 2.0 * cross - within(A) - within(B);
}

MetricReport evaluate(const Tensor& generated, const Tensor& reference) {
  MetricReport r;
  const FrechetResult f = frechet(generated, reference);
  r.frechet = f.value;
  r.frechet_jittered = f.jittered;
  r.energy = energy_distance(generated, reference);
  r.n_generated = generated.rank() == 1 ? generated.size() : generated.rows();
  r.n_reference = reference.rank() == 1 ? reference.size() : reference.rows();
  return r;
}

}  // namespace sfm
