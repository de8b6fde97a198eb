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

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "s2d/raster.hpp"

/// Image-fidelity metrics. SSIM works on rasters directly; the distribution
/// metrics take feature vectors or logits produced elsewhere (the sidecar).
namespace s2d {

class SidecarClient;

enum class FeatureModel { InceptionPool3, CLIPImage };

std::string_view to_string(FeatureModel model);
FeatureModel feature_model_from_string(std::string_view text);

inline constexpr int kInceptionDim = 2048;

struct FeatureSet {
  FeatureModel model = FeatureModel::InceptionPool3;
  int dim = 0;
  Eigen::MatrixXd vectors;  // n x dim, one sample per row
  std::vector<std::string> source_ids;
};

/// Throws Precondition unless n >= 1, vectors are finite, column count equals
/// dim, ids match rows, and Inception features have dimension 2048.
void validate(const FeatureSet& set);

enum class ImageMetric { FID, KID, CFID, IS, LPIPS, SSIM };

std::string_view to_string(ImageMetric metric);

struct ImageScore {
  ImageMetric metric = ImageMetric::FID;
  double value = 0.0;
  std::map<std::string, double> detail;
};

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, L = 255) of the
/// luma images. Images smaller than the window use one window cropped to the
/// image, renormalized.
[[nodiscard]] ImageScore ssim(const Raster& a, const Raster& b);

/// Principal square root of a symmetric PSD matrix by eigendecomposition.
/// Eigenvalues down to -1e-8 * max(1, |lambda|max) are clamped to zero.
[[nodiscard]] Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

/// Sample covariance with denominator n - 1.
[[nodiscard]] Eigen::MatrixXd covariance(const Eigen::MatrixXd& rows);

/// Frechet distance between Gaussian fits. Reported as CFID for CLIP features.
[[nodiscard]] ImageScore fid(const FeatureSet& real, const FeatureSet& gen);

struct KidOptions {
  int subsets = 10;
  int max_subset_size = 100;
  std::uint64_t seed = 0;
};

/// Unbiased MMD^2 with k(x, y) = (x.y / d + 1)^3, averaged over random
/// subsets of size min(n_real, n_gen, max_subset_size). detail["std"] is the
/// spread across subsets. Small negative values are expected.
[[nodiscard]] ImageScore kid(const FeatureSet& real, const FeatureSet& gen, const KidOptions& opts = {});

/// exp(E_x KL(p(y|x) || p(y))), rows softmaxed. With splits > 1 the rows are
/// cut into contiguous chunks and detail["std"] holds the spread.
[[nodiscard]] ImageScore inception_score(const Eigen::MatrixXd& logits, int splits = 1);

/// LPIPS distance from the sidecar, passed through unchanged.
[[nodiscard]] ImageScore lpips_pair(const Raster& a, const Raster& b, SidecarClient& client);

}  // namespace s2d
