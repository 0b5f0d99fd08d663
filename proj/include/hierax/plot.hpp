/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hierax/metrics.hpp"

namespace hierax::plot {

struct RocPlotData {
  std::string title;
  std::vector<metrics::RocPoint> curve;
  std::vector<double> band_fpr;  // FPR grid for the confidence band
  std::vector<double> band_lo;   // 2.5th percentile TPR per grid point
  std::vector<double> band_hi;   // 97.5th percentile TPR
  std::string legend;            // e.g. "AUC 0.937 (0.924-0.950)"
};

/// TPR of a ROC polyline at a given FPR (linear interpolation).
double tpr_at(const std::vector<metrics::RocPoint>& curve, double fpr);

/// Curve, shaded-band envelope from a stratified bootstrap, and a legend
/// with AUC and its percentile CI. Throws MetricsError on degenerate labels.
RocPlotData make_roc_plot(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          const std::string& title, int n_boot = 500, std::uint64_t seed = 0);

/// Standalone SVG document.
std::string roc_svg(const RocPlotData& data);

void save_roc_plot(const RocPlotData& data, const std::filesystem::path& path);

/// `fpr,tpr` CSV of the raw curve points, for external plotting.
void save_roc_points(const std::vector<metrics::RocPoint>& points,
                     const std::filesystem::path& path);

}  // namespace hierax::plot
