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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "s2d/image_metrics.hpp"
#include "s2d/raster.hpp"

namespace s2d {

struct SidecarOptions {
  std::string url = "http://127.0.0.1:8765";
  int retries = 2;  // extra attempts after a transport error or 5xx
  double timeout_s = 120.0;
  int max_in_flight = 4;
  int batch_size = 32;
};

struct SidecarHealth {
  bool ok = false;
  int http_status = 0;
  std::vector<std::string> models;
  std::map<std::string, std::string> versions;
};

/// JSON-over-HTTP client for the feature service (POST /features, /logits,
/// /lpips; GET /health). Safe to share between threads; at most
/// max_in_flight requests are outstanding at once.
///
/// Unreachable service, exhausted retries and non-2xx replies raise
/// SidecarUnavailable. Replies with the wrong shape raise Parse.
class SidecarClient {
 public:
  explicit SidecarClient(SidecarOptions opts);
  ~SidecarClient();
  SidecarClient(const SidecarClient&) = delete;
  SidecarClient& operator=(const SidecarClient&) = delete;

  [[nodiscard]] FeatureSet features(FeatureModel model, const std::vector<Raster>& images,
                                    const std::vector<std::string>& ids = {});
  [[nodiscard]] Eigen::MatrixXd logits(const std::vector<Raster>& images);
  [[nodiscard]] double lpips(const Raster& a, const Raster& b);
  /// Never throws; ok is false when the service is down or unhealthy.
  [[nodiscard]] SidecarHealth health();
  /// model_version echoed by the most recent /features or /logits reply.
  [[nodiscard]] std::string model_version() const;
  [[nodiscard]] const SidecarOptions& options() const { return opts_; }

 private:
  struct Impl;
  SidecarOptions opts_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace s2d
