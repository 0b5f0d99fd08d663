/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hierax/taxonomy.hpp"
#include "hierax/util.hpp"

namespace hierax {

/// Per-image scores in [0,1], one column per output node in canonical
/// taxonomy order, one row per image in manifest order.
struct PredictionMatrix {
  std::vector<std::string> image_ids;
  std::vector<NodeId> node_ids;
  std::vector<double> values;  // row-major, image_ids.size() x node_ids.size()

  std::size_t rows() const { return image_ids.size(); }
  std::size_t cols() const { return node_ids.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return values[row * cols() + col]; }

  /// Column of one node across all images.
  std::vector<double> column(std::size_t col) const;
  /// Column index of a node id; throws HieraxError when missing.
  std::size_t column_of(const NodeId& id) const;
};

/// CSV with header `image_id,<node_id_0>,...`; scores with 6 decimal places.
void save_predictions(const PredictionMatrix& m, const std::filesystem::path& path);
PredictionMatrix load_predictions(const std::filesystem::path& path);

}  // namespace hierax
