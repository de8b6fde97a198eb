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

#include "s2d/sidecar_client.hpp"

#include <httplib.h>

#include <json.hpp>
#include <mutex>
#include <semaphore>

#include "s2d/error.hpp"

namespace s2d {

using nlohmann::json;

struct SidecarClient::Impl {
  explicit Impl(int slots) : slots(slots) {}
  std::counting_semaphore<1024> slots;
  mutable std::mutex mu;
  std::string model_version;
};

namespace {

struct Reply {
  int status = 0;
  std::string body;
};

std::string encode_image(const Raster& img) {
  const auto png = encode_png(img);
  return base64_encode(png);
}

json parse_reply(const std::string& body, const char* endpoint) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string(endpoint) + ": malformed reply: " + e.what());
  }
}

}  // namespace

SidecarClient::SidecarClient(SidecarOptions opts)
    : opts_(std::move(opts)), impl_(std::make_unique<Impl>(std::clamp(opts_.max_in_flight, 1, 1024))) {}

SidecarClient::~SidecarClient() = default;

namespace {

Reply send(const SidecarOptions& opts, std::counting_semaphore<1024>& slots, const std::string& method,
           const std::string& path, const std::string& body) {
  slots.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots};

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= std::max(0, opts.retries); ++attempt) {
    httplib::Client cli(opts.url);
    const auto secs = static_cast<time_t>(opts.timeout_s);
    const auto usecs = static_cast<time_t>((opts.timeout_s - secs) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = method == "GET" ? cli.Get(path) : cli.Post(path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    return {res->status, res->body};
  }
  throw Error(ErrorCode::SidecarUnavailable, "sidecar " + path + " failed: " + last_error);
}

json post_ok(const SidecarOptions& opts, std::counting_semaphore<1024>& slots, const char* path,
             const json& payload) {
  const auto reply = send(opts, slots, "POST", path, payload.dump());
  if (reply.status != 200) {
    throw Error(ErrorCode::SidecarUnavailable,
                std::string(path) + " rejected request (HTTP " + std::to_string(reply.status) + "): " + reply.body);
  }
  return parse_reply(reply.body, path);
}

}  // namespace

FeatureSet SidecarClient::features(FeatureModel model, const std::vector<Raster>& images,
                                   const std::vector<std::string>& ids) {
  if (images.empty()) throw Error(ErrorCode::EmptyInput, "no images to featurize");
  if (!ids.empty() && ids.size() != images.size()) throw Error(ErrorCode::Precondition, "ids do not match images");
  FeatureSet out;
  out.model = model;
  out.source_ids = ids;
  std::vector<std::vector<double>> rows;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, opts_.batch_size));
  for (std::size_t lo = 0; lo < images.size(); lo += batch) {
    const std::size_t hi = std::min(images.size(), lo + batch);
    json payload{{"model", std::string(to_string(model))}, {"images", json::array()}};
    for (std::size_t i = lo; i < hi; ++i) payload["images"].push_back(encode_image(images[i]));
    const auto reply = post_ok(opts_, impl_->slots, "/features", payload);
    try {
      const int dim = reply.at("dim").get<int>();
      const auto& vectors = reply.at("vectors");
      if (vectors.size() != hi - lo) throw Error(ErrorCode::Parse, "/features: vector count mismatch");
      if (out.dim == 0) out.dim = dim;
      if (dim != out.dim) throw Error(ErrorCode::Parse, "/features: dim changed between batches");
      for (const auto& v : vectors) {
        auto row = v.get<std::vector<double>>();
        if (static_cast<int>(row.size()) != dim) throw Error(ErrorCode::Parse, "/features: vector length != dim");
        rows.push_back(std::move(row));
      }
      std::lock_guard lock(impl_->mu);
      impl_->model_version = reply.value("model_version", "");
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("/features: ") + e.what());
    }
  }
  out.vectors.resize(static_cast<Eigen::Index>(rows.size()), out.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.vectors.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), out.dim);
  }
  if (model == FeatureModel::InceptionPool3 && out.dim != kInceptionDim) {
    throw Error(ErrorCode::Parse, "/features: inception_pool3 reply has dim " + std::to_string(out.dim));
  }
  return out;
}

Eigen::MatrixXd SidecarClient::logits(const std::vector<Raster>& images) {
  if (images.empty()) throw Error(ErrorCode::EmptyInput, "no images to classify");
  std::vector<std::vector<double>> rows;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, opts_.batch_size));
  for (std::size_t lo = 0; lo < images.size(); lo += batch) {
    const std::size_t hi = std::min(images.size(), lo + batch);
    json payload{{"images", json::array()}};
    for (std::size_t i = lo; i < hi; ++i) payload["images"].push_back(encode_image(images[i]));
    const auto reply = post_ok(opts_, impl_->slots, "/logits", payload);
    try {
      const auto& l = reply.at("logits");
      if (l.size() != hi - lo) throw Error(ErrorCode::Parse, "/logits: row count mismatch");
      for (const auto& r : l) rows.push_back(r.get<std::vector<double>>());
      std::lock_guard lock(impl_->mu);
      impl_->model_version = reply.value("model_version", "");
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, std::string("/logits: ") + e.what());
    }
  }
  const auto k = rows.front().size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != k) throw Error(ErrorCode::Parse, "/logits: ragged rows");
    for (std::size_t j = 0; j < k; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

double SidecarClient::lpips(const Raster& a, const Raster& b) {
  const auto reply = post_ok(opts_, impl_->slots, "/lpips", json{{"a", encode_image(a)}, {"b", encode_image(b)}});
  try {
    const double v = reply.at("value").get<double>();
    if (!std::isfinite(v) || v < 0) throw Error(ErrorCode::Parse, "/lpips: value out of range");
    return v;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("/lpips: ") + e.what());
  }
}

SidecarHealth SidecarClient::health() {
  SidecarHealth h;
  try {
    SidecarOptions once = opts_;
    once.retries = 0;
    const auto reply = send(once, impl_->slots, "GET", "/health", "");
    h.http_status = reply.status;
    const auto body = json::parse(reply.body, nullptr, false);
    if (!body.is_discarded() && body.is_object()) {
      if (body.contains("models")) h.models = body["models"].get<std::vector<std::string>>();
      if (body.contains("versions")) h.versions = body["versions"].get<std::map<std::string, std::string>>();
      h.ok = reply.status == 200 && body.value("status", "") == "ok";
    }
  } catch (const std::exception&) {
    h.ok = false;
  }
  return h;
}

std::string SidecarClient::model_version() const {
  std::lock_guard lock(impl_->mu);
  return impl_->model_version;
}

}  // namespace s2d
