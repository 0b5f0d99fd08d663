/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hierax::plot {

using metrics::RocPoint;

double tpr_at(const std::vector<RocPoint>& curve, double fpr) {
  if (curve.empty()) return 0.0;
  if (fpr <= curve.front().fpr) return curve.front().tpr;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].fpr >= fpr) {
      const RocPoint& a = curve[i - 1];
      const RocPoint& b = curve[i];
      if (b.fpr == a.fpr) return std::max(a.tpr, b.tpr);
      const double w = (fpr - a.fpr) / (b.fpr - a.fpr);
      return a.tpr + w * (b.tpr - a.tpr);
    }
  }
  return curve.back().tpr;
}

RocPlotData make_roc_plot(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          const std::string& title, int n_boot, std::uint64_t seed) {
  RocPlotData data;
  data.title = title;
  data.curve = metrics::roc_points(scores, labels);
  if (data.curve.empty()) throw metrics::MetricsError("roc plot: degenerate labels");

  const auto point_auc = metrics::auc(scores, labels);
  const auto ci = metrics::auc_ci(scores, labels, std::max(n_boot, 100), seed);
  char legend[96];
  std::snprintf(legend, sizeof(legend), "AUC %.3f (%.3f-%.3f)", *point_auc, ci->first, ci->second);
  data.legend = legend;

  // Bootstrap envelope of TPR on a fixed FPR grid.
  constexpr int kGrid = 101;
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? pos : neg).push_back(scores[i]);
  }
  std::vector<std::vector<double>> tpr_samples(kGrid);
  Rng rng(Rng::derive(seed, 0xbad5));
  std::vector<double> boot_scores(scores.size());
  std::vector<std::uint8_t> boot_labels(scores.size());
  for (int b = 0; b < std::max(n_boot, 100); ++b) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < pos.size(); ++i, ++k) {
      boot_scores[k] = pos[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(pos.size()) - 1))];
      boot_labels[k] = 1;
    }
    for (std::size_t i = 0; i < neg.size(); ++i, ++k) {
      boot_scores[k] = neg[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(neg.size()) - 1))];
      boot_labels[k] = 0;
    }
    const auto curve = metrics::roc_points(boot_scores, boot_labels);
    for (int g = 0; g < kGrid; ++g) {
      tpr_samples[static_cast<std::size_t>(g)].push_back(
          tpr_at(curve, static_cast<double>(g) / (kGrid - 1)));
    }
  }
  for (int g = 0; g < kGrid; ++g) {
    auto& samples = tpr_samples[static_cast<std::size_t>(g)];
    std::sort(samples.begin(), samples.end());
    const auto pct = [&samples](double p) {
      const double h = p * static_cast<double>(samples.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(h);
      const std::size_t hi = std::min(lo + 1, samples.size() - 1);
      return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
    };
    data.band_fpr.push_back(static_cast<double>(g) / (kGrid - 1));
    data.band_lo.push_back(pct(0.025));
    data.band_hi.push_back(pct(0.975));
  }
  return data;
}

namespace {

constexpr int kSize = 480;
constexpr int kMargin = 56;

double px(double v) {  // data [0,1] -> x pixel
  return kMargin + v * (kSize - 2 * kMargin);
}
double py(double v) {  // data [0,1] -> y pixel (flipped)
  return kSize - kMargin - v * (kSize - 2 * kMargin);
}

void polyline(std::ostringstream& out, const std::vector<RocPoint>& pts, const char* style) {
  out << "<polyline fill=\"none\" " << style << " points=\"";
  char buf[48];
  for (const RocPoint& p : pts) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(p.fpr), py(p.tpr));
    out << buf;
  }
  out << "\"/>\n";
}

}  // namespace

std::string roc_svg(const RocPlotData& data) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
  out << "<rect width=\"" << kSize << "\" height=\"" << kSize << "\" fill=\"white\"/>\n";

  // Confidence band polygon: upper envelope forward, lower envelope back.
  if (!data.band_fpr.empty()) {
    out << "<polygon fill=\"#4a90d9\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    char buf[48];
    for (std::size_t i = 0; i < data.band_fpr.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(data.band_fpr[i]), py(data.band_hi[i]));
      out << buf;
    }
    for (std::size_t i = data.band_fpr.size(); i-- > 0;) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(data.band_fpr[i]), py(data.band_lo[i]));
      out << buf;
    }
    out << "\"/>\n";
  }

  // Axes, diagonal, curve.
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                "stroke=\"black\"/>\n",
                px(0.0), py(1.0), px(1.0) - px(0.0), py(0.0) - py(1.0));
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#999\" "
                "stroke-dasharray=\"5,5\"/>\n",
                px(0.0), py(0.0), px(1.0), py(1.0));
  out << buf;
  polyline(out, data.curve, "stroke=\"#1f4e9c\" stroke-width=\"2\"");

  // Tick labels and captions.
  for (const double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.2f</text>\n",
                  px(v), py(0.0) + 16.0, v);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n",
                  px(0.0) - 6.0, py(v) + 4.0, v);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%d\" font-size=\"13\" text-anchor=\"middle\">False positive "
                "rate</text>\n",
                px(0.5), kSize - 12);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"14\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 14 %.1f)\">True positive rate</text>\n",
                py(0.5), py(0.5));
  out << buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">%s</text>\n",
                px(0.5), data.title.c_str());
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\">%s</text>\n",
                px(1.0) - 8.0, py(0.0) - 10.0, data.legend.c_str());
  out << buf;
  out << "</svg>\n";
  return out.str();
}

void save_roc_plot(const RocPlotData& data, const std::filesystem::path& path) {
  write_file(path, roc_svg(data));
}

void save_roc_points(const std::vector<RocPoint>& points, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "fpr,tpr\n";
  char buf[64];
  for (const RocPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", p.fpr, p.tpr);
    out << buf;
  }
  write_file(path, out.str());
}

}  // namespace hierax::plot
