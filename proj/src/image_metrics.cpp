// Copyright 2026 The s2d Authors
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

#include "s2d/image_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "s2d/error.hpp"
#include "s2d/sidecar_client.hpp"

namespace s2d {

std::string_view to_string(FeatureModel model) {
  return model == FeatureModel::InceptionPool3 ? "inception_pool3" : "clip_image";
}

FeatureModel feature_model_from_string(std::string_view text) {
  if (text == "inception_pool3") return FeatureModel::InceptionPool3;
  if (text == "clip_image") return FeatureModel::CLIPImage;
  throw Error(ErrorCode::Parse, "unknown feature model: " + std::string(text));
}

std::string_view to_string(ImageMetric metric) {
  switch (metric) {
    case ImageMetric::FID: return "fid";
    case ImageMetric::KID: return "kid";
    case ImageMetric::CFID: return "cfid";
    case ImageMetric::IS: return "is";
    case ImageMetric::LPIPS: return "lpips";
    case ImageMetric::SSIM: return "ssim";
  }
  return "?";
}

void validate(const FeatureSet& set) {
  if (set.vectors.rows() < 1) throw Error(ErrorCode::Precondition, "feature set is empty");
  if (set.vectors.cols() != set.dim) throw Error(ErrorCode::Precondition, "feature width does not match dim");
  if (set.model == FeatureModel::InceptionPool3 && set.dim != kInceptionDim) {
    throw Error(ErrorCode::Precondition, "inception_pool3 features must have dim 2048");
  }
  if (!set.source_ids.empty() && static_cast<Eigen::Index>(set.source_ids.size()) != set.vectors.rows()) {
    throw Error(ErrorCode::Precondition, "source_ids do not match rows");
  }
  if (!set.vectors.allFinite()) throw Error(ErrorCode::Precondition, "non-finite feature value");
}

namespace {

std::vector<double> gaussian_kernel(int size) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) k[i] = std::exp(-((i - c) * (i - c)) / (2 * kSsimSigma * kSsimSigma));
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= s;
  return k;
}

// Separable valid-mode correlation of a w x h image.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& kx,
                                 const std::vector<double>& ky) {
  const int ow = w - static_cast<int>(kx.size()) + 1;
  const int oh = h - static_cast<int>(ky.size()) + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < kx.size(); ++i) s += kx[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < ky.size(); ++i) s += ky[i] * tmp[(y + i) * static_cast<std::size_t>(ow) + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

void require_pair(const FeatureSet& real, const FeatureSet& gen) {
  if (real.model != gen.model || real.dim != gen.dim) {
    throw Error(ErrorCode::ModelMismatch, "feature sets come from different models");
  }
  if (real.vectors.rows() < 2 || gen.vectors.rows() < 2) {
    throw Error(ErrorCode::DegenerateInput, "need at least two samples per set");
  }
  validate(real);
  validate(gen);
}

// (x.y / d + 1)^3 for every row pair.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double d) {
  return ((a * b.transpose()).array() / d + 1.0).cube().matrix();
}

double off_diagonal_sum(const Eigen::MatrixXd& k) { return k.sum() - k.trace(); }

std::vector<Eigen::Index> draw_subset(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (m < n) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / (v.size() - 1));
}

}  // namespace

ImageScore ssim(const Raster& a, const Raster& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch, "ssim needs equal image sizes");
  }
  const int w = a.width(), h = a.height();
  const auto ga = to_gray(a);
  const auto gb = to_gray(b);
  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  const auto kx = gaussian_kernel(std::min(kSsimWindow, w));
  const auto ky = gaussian_kernel(std::min(kSsimWindow, h));
  const auto mu_a = filter_valid(ga, w, h, kx, ky);
  const auto mu_b = filter_valid(gb, w, h, kx, ky);
  const auto e_aa = filter_valid(aa, w, h, kx, ky);
  const auto e_bb = filter_valid(bb, w, h, kx, ky);
  const auto e_ab = filter_valid(ab, w, h, kx, ky);
  constexpr double L = 255.0;
  constexpr double c1 = (0.01 * L) * (0.01 * L);
  constexpr double c2 = (0.03 * L) * (0.03 * L);
  double sum = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return {ImageMetric::SSIM, sum / static_cast<double>(mu_a.size()), {}};
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::NotSymmetric, "matrix is not square");
  if (m.size() == 0) return m;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw Error(ErrorCode::NotSymmetric, "matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double tol = 1e-8 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -tol) throw Error(ErrorCode::NotPsd, "matrix has a negative eigenvalue");
    lambda[i] = std::sqrt(std::max(0.0, lambda[i]));
  }
  const auto& v = eig.eigenvectors();
  return v * lambda.asDiagonal() * v.transpose();
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
}

ImageScore fid(const FeatureSet& real, const FeatureSet& gen) {
  require_pair(real, gen);
  const Eigen::RowVectorXd mu1 = real.vectors.colwise().mean();
  const Eigen::RowVectorXd mu2 = gen.vectors.colwise().mean();
  const double n1 = static_cast<double>(real.vectors.rows());
  const double n2 = static_cast<double>(gen.vectors.rows());
  const Eigen::MatrixXd x1 = real.vectors.rowwise() - mu1;
  const Eigen::MatrixXd x2 = gen.vectors.rowwise() - mu2;
  const double tr1 = x1.squaredNorm() / (n1 - 1);
  const double tr2 = x2.squaredNorm() / (n2 - 1);

  // Tr((S1 S2)^1/2). With fewer samples than dimensions the nonzero spectrum
  // of S1 S2 is that of (X1 X2^T)^T (X1 X2^T), so the trace is the nuclear
  // norm of the small cross product; otherwise sqrt(S1) S2 sqrt(S1).
  double tr_cross = 0;
  if (std::max(n1, n2) < real.dim) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x1 * x2.transpose());
    tr_cross = svd.singularValues().sum() / std::sqrt((n1 - 1) * (n2 - 1));
  } else {
    const Eigen::MatrixXd s1 = covariance(real.vectors);
    const Eigen::MatrixXd s2 = covariance(gen.vectors);
    const Eigen::MatrixXd r1 = matrix_sqrt_psd(s1);
    Eigen::MatrixXd inner = r1 * s2 * r1;
    inner = 0.5 * (inner + inner.transpose());
    tr_cross = matrix_sqrt_psd(inner).trace();
  }
  const double value = (mu1 - mu2).squaredNorm() + tr1 + tr2 - 2 * tr_cross;
  if (!std::isfinite(value)) throw Error(ErrorCode::NumericalFailure, "fid is not finite");
  const auto metric = real.model == FeatureModel::CLIPImage ? ImageMetric::CFID : ImageMetric::FID;
  return {metric, std::max(0.0, value), {{"raw", value}}};
}

ImageScore kid(const FeatureSet& real, const FeatureSet& gen, const KidOptions& opts) {
  require_pair(real, gen);
  if (opts.subsets < 1 || opts.max_subset_size < 2) throw Error(ErrorCode::Precondition, "bad kid options");
  const Eigen::Index m =
      std::min<Eigen::Index>({real.vectors.rows(), gen.vectors.rows(), opts.max_subset_size});
  const double d = real.dim;
  // Both index streams share one seed so equal-size identical sets pair up.
  std::mt19937_64 rng_real(opts.seed), rng_gen(opts.seed);
  std::vector<double> estimates;
  for (int s = 0; s < opts.subsets; ++s) {
    const auto ir = draw_subset(rng_real, real.vectors.rows(), m);
    const auto ig = draw_subset(rng_gen, gen.vectors.rows(), m);
    Eigen::MatrixXd xs(m, real.dim), ys(m, gen.dim);
    for (Eigen::Index i = 0; i < m; ++i) {
      xs.row(i) = real.vectors.row(ir[i]);
      ys.row(i) = gen.vectors.row(ig[i]);
    }
    // sum_{i != j} k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(x_j, y_i)
    const double sum = off_diagonal_sum(kernel_matrix(xs, xs, d)) + off_diagonal_sum(kernel_matrix(ys, ys, d)) -
                       2.0 * off_diagonal_sum(kernel_matrix(xs, ys, d));
    estimates.push_back(sum / (static_cast<double>(m) * (m - 1)));
  }
  return {ImageMetric::KID,
          mean_of(estimates),
          {{"std", std_of(estimates)}, {"subsets", double(opts.subsets)}, {"subset_size", double(m)}}};
}

ImageScore inception_score(const Eigen::MatrixXd& logits, int splits) {
  const Eigen::Index n = logits.rows(), k = logits.cols();
  if (n < 2 || k < 2) throw Error(ErrorCode::DegenerateInput, "inception score needs n >= 2 and k >= 2");
  if (splits < 1 || splits > n) throw Error(ErrorCode::Precondition, "bad split count");
  if (!logits.allFinite()) throw Error(ErrorCode::Precondition, "non-finite logit");
  Eigen::MatrixXd p(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) = e / e.sum();
  }
  std::vector<double> scores;
  for (int s = 0; s < splits; ++s) {
    const Eigen::Index lo = n * s / splits, hi = n * (s + 1) / splits;
    const Eigen::MatrixXd part = p.middleRows(lo, hi - lo);
    const Eigen::RowVectorXd marginal = part.colwise().mean();
    double kl_sum = 0;
    for (Eigen::Index i = 0; i < part.rows(); ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const double q = part(i, j);
        if (q > 0) kl_sum += q * (std::log(q) - std::log(marginal[j]));
      }
    }
    scores.push_back(std::exp(kl_sum / static_cast<double>(part.rows())));
  }
  ImageScore out{ImageMetric::IS, mean_of(scores), {}};
  if (splits > 1) out.detail["std"] = std_of(scores);
  return out;
}

ImageScore lpips_pair(const Raster& a, const Raster& b, SidecarClient& client) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch, "lpips needs equal image sizes");
  }
  return {ImageMetric::LPIPS, client.lpips(a, b), {}};
}

}  // namespace s2d
