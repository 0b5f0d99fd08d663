/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/labels.hpp"

#include <algorithm>

namespace hierax {

bool LabelSet::contains(const NodeId& id) const {
  return std::find(labels.begin(), labels.end(), id) != labels.end();
}

std::vector<NodeId> TargetVector::positive_ids(const Taxonomy& t) const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out.push_back(t.id_of(static_cast<int>(i)));
  }
  return out;
}

TargetVector propagate(const Taxonomy& t, const LabelSet& ls) {
  TargetVector tv;
  tv.bits.assign(static_cast<std::size_t>(t.size()), 0);
  for (const NodeId& id : ls.labels) {
    if (!t.contains(id)) throw LabelError("unknown label id: '" + id + "'");
    const int ix = t.index_of(id);
    tv.bits[static_cast<std::size_t>(ix)] = 1;
    if (t.node(ix).is_special()) continue;  // specials carry only their own bit
    for (const int a : t.ancestor_indices(ix)) tv.bits[static_cast<std::size_t>(a)] = 1;
  }
  return tv;
}

bool evaluation_positive(const Taxonomy& t, const NodeId& target_node, const LabelSet& ls) {
  const int target = t.index_of(target_node);
  for (const NodeId& id : ls.labels) {
    if (!t.contains(id)) throw LabelError("unknown label id: '" + id + "'");
    int cur = t.index_of(id);
    // Positive when the label is the target itself or sits below it.
    while (cur >= 0) {
      if (cur == target) return true;
      cur = t.parent_index(cur);
    }
  }
  return false;
}

ConsistencyReport consistency_report(const Taxonomy& t, const PredictionMatrix& scores,
                                     double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw LabelError("consistency threshold must be in (0,1)");
  }
  const std::vector<NodeId> expected = t.output_ids(true);
  if (scores.node_ids != expected) {
    throw LabelError("score columns do not match the taxonomy node list (" +
                     std::to_string(scores.cols()) + " columns, expected " +
                     std::to_string(expected.size()) + ")");
  }

  ConsistencyReport report;
  const auto edges = t.edges();
  report.images = scores.rows();
  report.total_pairs = scores.rows() * edges.size();
  report.per_edge.reserve(edges.size());
  for (const auto& [child, parent] : edges) {
    EdgeConsistency ec;
    ec.child = t.id_of(child);
    ec.parent = t.id_of(parent);
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      const bool child_on = scores.at(r, static_cast<std::size_t>(child)) >= threshold;
      const bool parent_on = scores.at(r, static_cast<std::size_t>(parent)) >= threshold;
      if (child_on && !parent_on) ++ec.violations;
    }
    report.total_violations += ec.violations;
    report.per_edge.push_back(std::move(ec));
  }
  return report;
}

}  // namespace hierax
