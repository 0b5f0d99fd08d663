/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierax/dataset.hpp"
#include "hierax/prediction.hpp"
#include "hierax/taxonomy.hpp"

namespace hierax::metrics {

struct MetricsError : HieraxError {
  using HieraxError::HieraxError;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// One-vs-all ROC summary for a single node. `auc` is empty when the labels
/// are degenerate (all one class); such nodes are excluded from averages.
struct RocResult {
  std::vector<RocPoint> points;
  std::optional<double> auc;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::size_t support_pos = 0;
  std::size_t support_neg = 0;

  bool defined() const { return auc.has_value(); }
};

/// Mann-Whitney AUC: fraction of (positive, negative) pairs where the
/// positive outscores the negative, ties counted as 1/2. Computed by average
/// ranks in O(n log n); exactly equal to the pair count. Empty when one class
/// is missing.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// ROC curve from a sweep over the distinct scores, starting at (0,0) and
/// ending at (1,1). Trapezoidal area equals auc(). Empty when degenerate.
std::vector<RocPoint> roc_points(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels);

double trapezoid_area(const std::vector<RocPoint>& points);

/// Stratified percentile bootstrap: positives and negatives are resampled
/// separately n_boot times; returns the 2.5th/97.5th percentiles of the
/// bootstrap AUC distribution. Deterministic given seed. Empty on degenerate
/// labels.
std::optional<std::pair<double, double>> auc_ci(std::span<const double> scores,
                                                std::span<const std::uint8_t> labels,
                                                int n_boot = 2000, std::uint64_t seed = 0);

struct NodeResult {
  NodeId id;
  std::string name;
  RocResult roc;
};

struct EvaluationReport {
  std::vector<NodeResult> per_node;       // canonical node order
  std::optional<double> avg_auc;          // mean over defined nodes
  double avg_auc_std = 0.0;               // sample std over defined nodes
  std::size_t nodes_used = 0;             // defined nodes entering the average
};

struct ReportOptions {
  bool with_ci = true;
  int n_boot = 2000;
  std::uint64_t seed = 0;
  /// Drop records whose raw labels contain the special label `exclude`.
  bool drop_excluded = false;
};

/// Per-node one-vs-all evaluation over a prediction matrix. Positives follow
/// the descendant-closure rule (evaluation_positive); degenerate nodes are
/// kept in the report but excluded from the average. Throws MetricsError when
/// the matrix columns do not match the taxonomy.
EvaluationReport per_label_report(const Taxonomy& t, const PredictionMatrix& predictions,
                                  const Manifest& manifest, const ReportOptions& opts = {});

/// Restricts to images positive for filter_node and evaluates target_node on
/// that subset (e.g. COVID-19 within any-pneumonia images). Degenerate
/// subsets yield an undefined RocResult.
RocResult subset_eval(const Taxonomy& t, const PredictionMatrix& predictions,
                      const Manifest& manifest, const NodeId& filter_node,
                      const NodeId& target_node, const ReportOptions& opts = {});

/// CSV: node_id,name,support_pos,support_neg,auc,ci_low,ci_high plus a
/// trailing summary comment line.
void save_report(const EvaluationReport& report, const std::filesystem::path& path);

}  // namespace hierax::metrics
