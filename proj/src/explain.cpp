/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/explain.hpp"

#include <algorithm>
#include <cmath>

namespace hierax {

Plane gradcam_raw(const FeatureShape& shape, std::span<const float> features,
                  std::span<const float> grad_features) {
  if (features.size() != shape.count() || grad_features.size() != shape.count()) {
    throw ExplainError("gradcam_raw: buffer sizes do not match the feature shape");
  }
  const int spatial = shape.height * shape.width;
  Plane cam;
  cam.width = shape.width;
  cam.height = shape.height;
  cam.values.assign(static_cast<std::size_t>(spatial), 0.0f);
  for (int c = 0; c < shape.channels; ++c) {
    const float* g = grad_features.data() + static_cast<std::size_t>(c) * spatial;
    const float* a = features.data() + static_cast<std::size_t>(c) * spatial;
    double weight = 0.0;
    for (int p = 0; p < spatial; ++p) weight += g[p];
    weight /= static_cast<double>(spatial);
    for (int p = 0; p < spatial; ++p) {
      cam.values[static_cast<std::size_t>(p)] += static_cast<float>(weight) * a[p];
    }
  }
  for (float& v : cam.values) v = std::max(v, 0.0f);
  return cam;
}

namespace {

void max_normalize(Plane& plane) {
  float top = 0.0f;
  for (const float v : plane.values) top = std::max(top, v);
  if (top > 0.0f) {
    for (float& v : plane.values) v /= top;
  }
}

}  // namespace

Plane gradcam_map(const Model& model, const ModelInput& input, int output_index) {
  const auto ws = model.make_workspace();
  model.forward(input, *ws);
  const FeatureShape shape = model.feature_shape();
  const float* grad = model.grad_wrt_features(output_index, *ws);
  Plane cam = gradcam_raw(shape, std::span<const float>(model.features(*ws), shape.count()),
                          std::span<const float>(grad, shape.count()));
  Plane up = resize_plane(cam, ModelInput::kSize, ModelInput::kSize);
  for (float& v : up.values) v = std::max(v, 0.0f);  // interpolation cannot undershoot, but be strict
  max_normalize(up);
  return up;
}

namespace {

int output_index_of(const Model& model, const Taxonomy& t, const NodeId& node) {
  const std::vector<NodeId> ids = t.output_ids(model.config().include_specials);
  const auto it = std::find(ids.begin(), ids.end(), node);
  if (it == ids.end()) {
    throw ExplainError("node '" + node + "' is not an output of this model");
  }
  return static_cast<int>(it - ids.begin());
}

Plane cam_for_index(const Model& model, Model::Workspace& ws, int output_index) {
  const FeatureShape shape = model.feature_shape();
  const float* grad = model.grad_wrt_features(output_index, ws);
  Plane cam = gradcam_raw(shape, std::span<const float>(model.features(ws), shape.count()),
                          std::span<const float>(grad, shape.count()));
  Plane up = resize_plane(cam, ModelInput::kSize, ModelInput::kSize);
  for (float& v : up.values) v = std::max(v, 0.0f);
  max_normalize(up);
  return up;
}

}  // namespace

Heatmap gradcam(const Model& model, const Taxonomy& t, const ModelInput& input,
                const NodeId& node) {
  Heatmap map;
  map.node = node;
  map.values = gradcam_map(model, input, output_index_of(model, t, node));
  return map;
}

std::vector<Heatmap> gradcam_many(const Model& model, const Taxonomy& t, const ModelInput& input,
                                  const std::vector<NodeId>& nodes) {
  std::vector<Heatmap> out;
  if (nodes.empty()) return out;
  const auto ws = model.make_workspace();
  model.forward(input, *ws);
  for (const NodeId& node : nodes) {
    Heatmap map;
    map.node = node;
    map.values = cam_for_index(model, *ws, output_index_of(model, t, node));
    out.push_back(std::move(map));
  }
  return out;
}

void save_heatmap(const Heatmap& map, const std::filesystem::path& path) {
  RawImage img;
  img.width = map.values.width;
  img.height = map.values.height;
  img.bit_depth = 8;
  img.pixels.resize(map.values.values.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint16_t>(
        std::clamp(std::lround(map.values.values[i] * 255.0f), 0l, 255l));
  }
  save_pgm(img, path);
}

namespace {

// Classic jet ramp; h in [0,1].
void jet(float h, float* r, float* g, float* b) {
  const auto band = [](float x) { return std::clamp(1.5f - std::abs(x), 0.0f, 1.0f); };
  *r = band(4.0f * h - 3.0f);
  *g = band(4.0f * h - 2.0f);
  *b = band(4.0f * h - 1.0f);
}

}  // namespace

void save_overlay(const Heatmap& map, const ModelInput& image, const std::filesystem::path& path) {
  const Plane& gray = image.plane;
  if (gray.width != map.values.width || gray.height != map.values.height) {
    throw ExplainError("overlay: heatmap and image sizes differ");
  }
  float lo = gray.values.empty() ? 0.0f : gray.values[0];
  float hi = lo;
  for (const float v : gray.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi > lo ? hi - lo : 1.0f;

  std::vector<std::uint8_t> rgb(gray.values.size() * 3);
  for (std::size_t i = 0; i < gray.values.size(); ++i) {
    const float base = (gray.values[i] - lo) / range;
    const float h = map.values.values[i];
    float r, g, b;
    jet(h, &r, &g, &b);
    const float alpha = 0.45f * h;  // stronger tint where attention is high
    const auto mix = [&](float c) {
      return static_cast<std::uint8_t>(
          std::clamp(std::lround((base * (1.0f - alpha) + c * alpha) * 255.0f), 0l, 255l));
    };
    rgb[3 * i] = mix(r);
    rgb[3 * i + 1] = mix(g);
    rgb[3 * i + 2] = mix(b);
  }
  save_ppm_rgb(gray.width, gray.height, rgb, path);
}

}  // namespace hierax
