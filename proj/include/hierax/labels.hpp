/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hierax/prediction.hpp"
#include "hierax/taxonomy.hpp"

namespace hierax {

struct LabelError : HieraxError {
  using HieraxError::HieraxError;
};

/// Raw labels extracted from one radiology report. Order is irrelevant;
/// duplicates are tolerated and collapse during propagation.
struct LabelSet {
  std::vector<NodeId> labels;

  bool contains(const NodeId& id) const;
};

/// Dense binary target over all taxonomy nodes in canonical index order.
/// Ancestor-closed by construction: bits[child] = 1 implies bits[parent] = 1.
struct TargetVector {
  std::vector<std::uint8_t> bits;

  std::vector<NodeId> positive_ids(const Taxonomy& t) const;
};

/// Training semantics: marks every label and all of its ancestors up to the
/// tree root. Special labels map only to their own bit. Throws LabelError on
/// ids missing from the taxonomy.
TargetVector propagate(const Taxonomy& t, const LabelSet& ls);

/// Evaluation semantics: an image is positive for `target_node` when its raw
/// labels contain the node or any of its descendants. Everything else is a
/// negative, including images positive only for sibling findings.
bool evaluation_positive(const Taxonomy& t, const NodeId& target_node, const LabelSet& ls);

/// Hierarchy-consistency measurement over a score matrix: for every tree
/// edge, how often does the child fire (score >= threshold) while its parent
/// does not. Detection-time enforcement is out of scope; this only measures.
struct EdgeConsistency {
  NodeId child;
  NodeId parent;
  std::size_t violations = 0;
};

struct ConsistencyReport {
  std::vector<EdgeConsistency> per_edge;
  std::size_t images = 0;
  std::size_t total_violations = 0;
  std::size_t total_pairs = 0;  // images x edges

  double overall_rate() const {
    return total_pairs == 0 ? 0.0 : static_cast<double>(total_violations) / static_cast<double>(total_pairs);
  }
};

/// Requires threshold in (0,1) and scores columns matching the taxonomy's
/// full node list; throws LabelError otherwise.
ConsistencyReport consistency_report(const Taxonomy& t, const PredictionMatrix& scores,
                                     double threshold = 0.5);

}  // namespace hierax
