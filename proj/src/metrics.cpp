/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "hierax/labels.hpp"

namespace hierax::metrics {

namespace {

struct ClassSplit {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  bool degenerate() const { return positives == 0 || negatives == 0; }
};

ClassSplit count_classes(std::span<const std::uint8_t> labels) {
  ClassSplit s;
  for (const std::uint8_t l : labels) {
    if (l) {
      ++s.positives;
    } else {
      ++s.negatives;
    }
  }
  return s;
}

double auc_of_sets(std::vector<double>& pos, std::vector<double>& neg) {
  // Average-rank Mann-Whitney over the merged sample.
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos.size() + neg.size());
  for (const double s : pos) items.push_back({s, true});
  for (const double s : neg) items.push_back({s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].positive) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

}  // namespace

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw MetricsError("auc: scores/labels length mismatch");
  if (count_classes(labels).degenerate()) return std::nullopt;
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? pos : neg).push_back(scores[i]);
  }
  return auc_of_sets(pos, neg);
}

std::vector<RocPoint> roc_points(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw MetricsError("roc_points: length mismatch");
  const ClassSplit split = count_classes(labels);
  if (split.degenerate()) return {};

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    points.push_back({static_cast<double>(fp) / static_cast<double>(split.negatives),
                      static_cast<double>(tp) / static_cast<double>(split.positives)});
    i = j;
  }
  return points;
}

double trapezoid_area(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  }
  return area;
}

std::optional<std::pair<double, double>> auc_ci(std::span<const double> scores,
                                                std::span<const std::uint8_t> labels,
                                                int n_boot, std::uint64_t seed) {
  if (n_boot < 100) throw MetricsError("auc_ci: n_boot must be >= 100");
  if (scores.size() != labels.size()) throw MetricsError("auc_ci: length mismatch");
  if (count_classes(labels).degenerate()) return std::nullopt;

  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? pos : neg).push_back(scores[i]);
  }

  Rng rng(seed);
  std::vector<double> boot(static_cast<std::size_t>(n_boot));
  std::vector<double> pos_sample(pos.size()), neg_sample(neg.size());
  for (int b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < pos.size(); ++i) {
      pos_sample[i] = pos[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(pos.size()) - 1))];
    }
    for (std::size_t i = 0; i < neg.size(); ++i) {
      neg_sample[i] = neg[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(neg.size()) - 1))];
    }
    boot[static_cast<std::size_t>(b)] = auc_of_sets(pos_sample, neg_sample);
  }
  std::sort(boot.begin(), boot.end());
  const auto percentile = [&boot](double p) {
    const double h = p * static_cast<double>(boot.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, boot.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return boot[lo] + frac * (boot[hi] - boot[lo]);
  };
  return std::make_pair(percentile(0.025), percentile(0.975));
}

namespace {

RocResult evaluate_one(std::span<const double> scores, std::span<const std::uint8_t> labels,
                       const ReportOptions& opts, std::uint64_t node_seed) {
  RocResult r;
  const ClassSplit split = count_classes(labels);
  r.support_pos = split.positives;
  r.support_neg = split.negatives;
  r.auc = auc(scores, labels);
  if (!r.auc) return r;
  r.points = roc_points(scores, labels);
  if (opts.with_ci) {
    if (const auto ci = auc_ci(scores, labels, opts.n_boot, node_seed)) {
      r.ci_low = ci->first;
      r.ci_high = ci->second;
    }
  }
  return r;
}

}  // namespace

EvaluationReport per_label_report(const Taxonomy& t, const PredictionMatrix& predictions,
                                  const Manifest& manifest, const ReportOptions& opts) {
  std::unordered_map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& rec : manifest.records) by_id.emplace(rec.image_id, &rec);

  std::vector<const ImageRecord*> rows;
  std::vector<std::size_t> row_indices;
  rows.reserve(predictions.rows());
  for (std::size_t r = 0; r < predictions.rows(); ++r) {
    const auto it = by_id.find(predictions.image_ids[r]);
    if (it == by_id.end()) {
      throw MetricsError("prediction row '" + predictions.image_ids[r] +
                         "' has no manifest record");
    }
    if (opts.drop_excluded && it->second->labels.contains("exclude")) continue;
    rows.push_back(it->second);
    row_indices.push_back(r);
  }

  EvaluationReport report;
  report.per_node.reserve(predictions.cols());
  std::vector<double> defined_aucs;
  for (std::size_t c = 0; c < predictions.cols(); ++c) {
    const NodeId& node_id = predictions.node_ids[c];
    if (!t.contains(node_id)) {
      throw MetricsError("prediction column '" + node_id + "' is not in the taxonomy");
    }
    std::vector<double> scores(rows.size());
    std::vector<std::uint8_t> labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      scores[r] = predictions.at(row_indices[r], c);
      labels[r] = evaluation_positive(t, node_id, rows[r]->labels) ? 1 : 0;
    }
    NodeResult nr;
    nr.id = node_id;
    nr.name = t.node(t.index_of(node_id)).display_name;
    nr.roc = evaluate_one(scores, labels, opts, Rng::derive(opts.seed, c));
    if (nr.roc.defined()) defined_aucs.push_back(*nr.roc.auc);
    report.per_node.push_back(std::move(nr));
  }

  report.nodes_used = defined_aucs.size();
  if (!defined_aucs.empty()) {
    const double mean = std::accumulate(defined_aucs.begin(), defined_aucs.end(), 0.0) /
                        static_cast<double>(defined_aucs.size());
    report.avg_auc = mean;
    if (defined_aucs.size() > 1) {
      double ss = 0.0;
      for (const double a : defined_aucs) ss += (a - mean) * (a - mean);
      report.avg_auc_std = std::sqrt(ss / static_cast<double>(defined_aucs.size() - 1));
    }
  }
  return report;
}

RocResult subset_eval(const Taxonomy& t, const PredictionMatrix& predictions,
                      const Manifest& manifest, const NodeId& filter_node,
                      const NodeId& target_node, const ReportOptions& opts) {
  (void)t.index_of(filter_node);  // validate both nodes up front
  const std::size_t target_col = predictions.column_of(target_node);

  std::unordered_map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& rec : manifest.records) by_id.emplace(rec.image_id, &rec);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t r = 0; r < predictions.rows(); ++r) {
    const auto it = by_id.find(predictions.image_ids[r]);
    if (it == by_id.end()) {
      throw MetricsError("prediction row '" + predictions.image_ids[r] +
                         "' has no manifest record");
    }
    const ImageRecord& rec = *it->second;
    if (opts.drop_excluded && rec.labels.contains("exclude")) continue;
    if (!evaluation_positive(t, filter_node, rec.labels)) continue;
    scores.push_back(predictions.at(r, target_col));
    labels.push_back(evaluation_positive(t, target_node, rec.labels) ? 1 : 0);
  }
  return evaluate_one(scores, labels, opts, Rng::derive(opts.seed, 0x5e7));
}

void save_report(const EvaluationReport& report, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "node_id,name,support_pos,support_neg,auc,ci_low,ci_high\n";
  char buf[64];
  const auto fmt = [&buf](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
  };
  for (const NodeResult& nr : report.per_node) {
    out << nr.id << ',' << nr.name << ',' << nr.roc.support_pos << ',' << nr.roc.support_neg << ','
        << fmt(nr.roc.auc) << ',' << fmt(nr.roc.ci_low) << ',' << fmt(nr.roc.ci_high) << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.avg_auc_std);
  out << "# avg_auc=" << fmt(report.avg_auc) << " avg_auc_std=" << buf
      << " nodes_used=" << report.nodes_used << '\n';
  write_file(path, out.str());
}

}  // namespace hierax::metrics
