/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/prediction.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace hierax {

std::vector<double> PredictionMatrix::column(std::size_t col) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, col);
  return out;
}

std::size_t PredictionMatrix::column_of(const NodeId& id) const {
  const auto it = std::find(node_ids.begin(), node_ids.end(), id);
  if (it == node_ids.end()) throw HieraxError("prediction matrix has no column for '" + id + "'");
  return static_cast<std::size_t>(it - node_ids.begin());
}

void save_predictions(const PredictionMatrix& m, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "image_id";
  for (const NodeId& id : m.node_ids) out << ',' << id;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.image_ids[r];
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.6f", m.at(r, c));
      out << buf;
    }
    out << '\n';
  }
  write_file(path, out.str());
}

PredictionMatrix load_predictions(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty()) throw HieraxError("empty prediction file: " + path.string());
  std::vector<std::string> header = split(lines[0], ',');
  if (header.empty() || header[0] != "image_id") {
    throw HieraxError("prediction file must start with an image_id column: " + path.string());
  }
  PredictionMatrix m;
  m.node_ids.assign(header.begin() + 1, header.end());
  const std::size_t n = m.node_ids.size();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::vector<std::string> fields = split(lines[i], ',');
    if (fields.size() != n + 1) {
      throw HieraxError(path.string() + ": row " + std::to_string(i + 1) + " has " +
                        std::to_string(fields.size() - 1) + " scores, expected " + std::to_string(n));
    }
    m.image_ids.push_back(fields[0]);
    for (std::size_t c = 0; c < n; ++c) {
      m.values.push_back(parse_double(fields[c + 1], path.string() + " row " + std::to_string(i + 1)));
    }
  }
  return m;
}

}  // namespace hierax
