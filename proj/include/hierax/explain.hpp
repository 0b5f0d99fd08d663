/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "hierax/imaging.hpp"
#include "hierax/model.hpp"
#include "hierax/taxonomy.hpp"

namespace hierax {

struct ExplainError : HieraxError {
  using HieraxError::HieraxError;
};

/// Gradient-weighted attention map for one output node: values in [0,1] at
/// 299x299, max exactly 1 unless the raw map is identically zero.
struct Heatmap {
  Plane values;
  NodeId node;
  std::string image_id;
};

/// Raw class-activation map on the feature grid: channel weights are the
/// spatial means of the logit gradient, the map is ReLU of the weighted
/// channel sum. Exposed for hand-computable tests.
Plane gradcam_raw(const FeatureShape& shape, std::span<const float> features,
                  std::span<const float> grad_features);

/// Full pipeline for one output index: evaluation-mode forward, gradient of
/// the pre-sigmoid logit w.r.t. the last convolutional feature map, weighted
/// map, bilinear upsample to 299x299, max-normalization (a zero map stays
/// zero).
Plane gradcam_map(const Model& model, const ModelInput& input, int output_index);

/// Node-addressed variant; the node must be one of the model's outputs.
Heatmap gradcam(const Model& model, const Taxonomy& t, const ModelInput& input,
                const NodeId& node);

/// One shared forward pass, one independent head backward per node; equal to
/// calling gradcam per node.
std::vector<Heatmap> gradcam_many(const Model& model, const Taxonomy& t, const ModelInput& input,
                                  const std::vector<NodeId>& nodes);

/// Grayscale heatmap (8-bit PGM).
void save_heatmap(const Heatmap& map, const std::filesystem::path& path);
/// Heatmap color-blended onto the preprocessed radiograph (8-bit PPM).
void save_overlay(const Heatmap& map, const ModelInput& image, const std::filesystem::path& path);

}  // namespace hierax
