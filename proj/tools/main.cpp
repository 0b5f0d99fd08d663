/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */

// hierax command line: taxonomy inspection, label propagation, synthetic data
// generation, training, prediction, evaluation and attention maps.
//
// Exit codes: 0 success, 1 internal error, 2 invalid input or configuration,
// 3 taxonomy/checkpoint mismatch, 4 degenerate or dimension error in a
// computation, 5 filesystem error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "hierax/dataset.hpp"
#include "hierax/explain.hpp"
#include "hierax/imaging.hpp"
#include "hierax/labels.hpp"
#include "hierax/metrics.hpp"
#include "hierax/model.hpp"
#include "hierax/plot.hpp"
#include "hierax/prediction.hpp"
#include "hierax/taxonomy.hpp"

namespace fs = std::filesystem;
using namespace hierax;

namespace {

struct MismatchError : HieraxError {
  using HieraxError::HieraxError;
};

std::vector<const ImageRecord*> select_records(const Manifest& m, const std::string& split) {
  std::vector<const ImageRecord*> out;
  for (const ImageRecord& rec : m.records) {
    if (split.empty() || (rec.split && split_name(*rec.split) == split)) out.push_back(&rec);
  }
  return out;
}

SplitSpec parse_split(const std::vector<double>& fractions, std::uint64_t seed) {
  if (fractions.size() != 3) throw DatasetError("--split needs three fractions: train,val,test");
  SplitSpec spec;
  spec.train = fractions[0];
  spec.val = fractions[1];
  spec.test = fractions[2];
  spec.seed = seed;
  spec.validate();
  return spec;
}

void check_alignment(const Taxonomy& t, const PredictionMatrix& m) {
  if (m.node_ids != t.output_ids(true) && m.node_ids != t.output_ids(false)) {
    throw MismatchError("prediction columns do not match the taxonomy's canonical node list");
  }
}

// --- subcommand bodies -------------------------------------------------------

int cmd_taxonomy(const std::string& action, const fs::path& taxonomy_path) {
  if (action == "validate") {
    // Parse errors surface as TaxonomyError with a line number (exit 2).
    const Taxonomy t = load_taxonomy(taxonomy_path);
    std::printf("OK, %d nodes\n", t.size());
    return 0;
  }
  const Taxonomy t = load_taxonomy(taxonomy_path);
  if (action == "show") {
    std::fputs(render_tree(t).c_str(), stdout);
    return 0;
  }
  if (action == "index") {
    for (int i = 0; i < t.size(); ++i) {
      const TaxonomyNode& n = t.node(i);
      std::printf("%d,%s,%s,%s,%d\n", i, n.id.c_str(), n.display_name.c_str(),
                  group_name(n.group), n.is_special() ? 1 : 0);
    }
    return 0;
  }
  throw HieraxError("unknown taxonomy action: " + action);
}

int cmd_propagate(const fs::path& taxonomy_path, const fs::path& manifest_path,
                  const fs::path& out_path) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const Manifest m = load_manifest(manifest_path, t);

  std::string out = "image_id";
  for (int i = 0; i < t.size(); ++i) out += "," + t.id_of(i);
  out += '\n';
  std::vector<std::size_t> counts(static_cast<std::size_t>(t.size()), 0);
  for (const ImageRecord& rec : m.records) {
    const TargetVector tv = propagate(t, rec.labels);
    out += rec.image_id;
    for (std::size_t i = 0; i < tv.bits.size(); ++i) {
      out += tv.bits[i] ? ",1" : ",0";
      counts[i] += tv.bits[i];
    }
    out += '\n';
  }
  write_file(out_path, out);
  std::printf("wrote %zu target rows to %s\n", m.records.size(), out_path.string().c_str());
  std::printf("positives per node:\n");
  for (int i = 0; i < t.size(); ++i) {
    std::printf("%s: %zu\n", t.id_of(i).c_str(), counts[static_cast<std::size_t>(i)]);
  }
  return 0;
}

int cmd_synth(const fs::path& taxonomy_path, const fs::path& out_dir, const SyntheticConfig& cfg,
              const std::vector<double>& split_fractions) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  SyntheticDataset ds = generate_synthetic(t, cfg, out_dir);
  if (!split_fractions.empty()) {
    patient_split(ds.manifest.records, parse_split(split_fractions, cfg.seed));
    save_manifest(ds.manifest, ds.manifest_path);
  }
  std::size_t patients = 0;
  {
    std::vector<std::string> ids;
    for (const ImageRecord& r : ds.manifest.records) ids.push_back(r.patient_id);
    std::sort(ids.begin(), ids.end());
    patients = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
  }
  std::printf("generated %zu images (%zu patients, %zu glyphs) under %s\n",
              ds.manifest.records.size(), patients, ds.boxes.size(), out_dir.string().c_str());
  return 0;
}

struct TrainArgs {
  fs::path taxonomy, manifest, out;
  ModelConfig model;
  TrainConfig train;
  std::vector<double> split_fractions;
  std::string normalize = "std";
};

PreprocessOptions preprocess_options(const std::string& normalize) {
  PreprocessOptions pre;
  if (normalize == "std") {
    pre.normalize = NormalizeMode::std_dev;
  } else if (normalize == "variance") {
    pre.normalize = NormalizeMode::variance;
  } else {
    throw HieraxError("--normalize must be 'std' or 'variance'");
  }
  return pre;
}

int cmd_train(const TrainArgs& args) {
  const Taxonomy t = load_taxonomy(args.taxonomy);
  Manifest m = load_manifest(args.manifest, t);
  fs::create_directories(args.out);

  const bool needs_split =
      std::any_of(m.records.begin(), m.records.end(),
                  [](const ImageRecord& r) { return !r.split.has_value(); });
  if (needs_split) {
    std::vector<double> fr = args.split_fractions;
    if (fr.empty()) fr = {0.7, 0.15, 0.15};
    patient_split(m.records, parse_split(fr, args.train.seed));
    save_manifest(m, args.out / "manifest_split.csv");
    std::printf("assigned patient-disjoint splits; wrote %s\n",
                (args.out / "manifest_split.csv").string().c_str());
  }

  ModelConfig mcfg = args.model;
  mcfg.num_outputs = static_cast<int>(t.output_indices(mcfg.include_specials).size());
  Model model = Model::build(mcfg, args.train.seed);
  std::printf("model '%s': %zu parameters, %d outputs\n", mcfg.backbone.c_str(),
              model.param_count(), mcfg.num_outputs);

  const auto train_records = select_records(m, "train");
  const auto val_records = select_records(m, "val");
  const PreprocessOptions pre = preprocess_options(args.normalize);
  TrainResult result =
      train(t, m, train_records, val_records, std::move(model), args.train, pre,
            [](const EpochStats& s) {
              std::printf("epoch %d lr %.3g train_loss %.5f val_loss %.5f val_metric %.5f\n",
                          s.epoch, s.lr, s.train_loss, s.val_loss, s.val_metric);
              std::fflush(stdout);
            });

  save_checkpoint(result.model, t.checksum(), args.out / "checkpoint.bin");
  save_history(result.history, result.best_epoch, args.out / "history.csv");
  std::printf("best epoch %d (val_metric %.5f); checkpoint and history written to %s\n",
              result.best_epoch, result.history[static_cast<std::size_t>(result.best_epoch)].val_metric,
              args.out.string().c_str());
  return 0;
}

int cmd_predict(const fs::path& taxonomy_path, const fs::path& manifest_path,
                const fs::path& checkpoint_path, const fs::path& out_path,
                const std::string& split, const std::string& normalize) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.taxonomy_checksum != t.checksum()) {
    throw MismatchError("checkpoint was trained against a different taxonomy (checksum mismatch)");
  }
  const Manifest m = load_manifest(manifest_path, t);
  const auto records = select_records(m, split);
  const PredictionMatrix pm = predict(ck.model, t, m, records, preprocess_options(normalize));
  save_predictions(pm, out_path);
  std::printf("wrote %zu prediction rows x %zu nodes to %s\n", pm.rows(), pm.cols(),
              out_path.string().c_str());
  return 0;
}

int cmd_evaluate(const fs::path& taxonomy_path, const fs::path& manifest_path,
                 const fs::path& predictions_path, const fs::path& out_path, bool with_ci,
                 int n_boot, std::uint64_t seed, bool drop_excluded, const std::string& filter_node,
                 const std::string& target_node, const fs::path& roc_dir) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const Manifest m = load_manifest(manifest_path, t);
  const PredictionMatrix pm = load_predictions(predictions_path);
  check_alignment(t, pm);

  metrics::ReportOptions opts;
  opts.with_ci = with_ci;
  opts.n_boot = n_boot;
  opts.seed = seed;
  opts.drop_excluded = drop_excluded;
  const metrics::EvaluationReport report = metrics::per_label_report(t, pm, m, opts);
  metrics::save_report(report, out_path);

  for (const metrics::NodeResult& nr : report.per_node) {
    if (!nr.roc.defined()) {
      std::printf("%-36s  undefined (pos %zu neg %zu)\n", nr.id.c_str(), nr.roc.support_pos,
                  nr.roc.support_neg);
    } else if (nr.roc.ci_low) {
      std::printf("%-36s  AUC %.3f (%.3f-%.3f)  N+ %zu\n", nr.id.c_str(), *nr.roc.auc,
                  *nr.roc.ci_low, *nr.roc.ci_high, nr.roc.support_pos);
    } else {
      std::printf("%-36s  AUC %.3f  N+ %zu\n", nr.id.c_str(), *nr.roc.auc, nr.roc.support_pos);
    }
  }
  if (report.avg_auc) {
    std::printf("avg AUC %.3f (%.3f) over %zu nodes\n", *report.avg_auc, report.avg_auc_std,
                report.nodes_used);
  } else {
    std::printf("avg AUC undefined: no node had both classes\n");
  }

  if (!filter_node.empty() || !target_node.empty()) {
    if (filter_node.empty() || target_node.empty()) {
      throw HieraxError("--subset-filter and --subset-target must be given together");
    }
    const metrics::RocResult r = metrics::subset_eval(t, pm, m, filter_node, target_node, opts);
    if (!r.defined()) {
      std::printf("subset %s|%s: undefined (pos %zu neg %zu)\n", target_node.c_str(),
                  filter_node.c_str(), r.support_pos, r.support_neg);
    } else if (r.ci_low) {
      std::printf("subset %s|%s: AUC %.3f (%.3f-%.3f) on %zu images\n", target_node.c_str(),
                  filter_node.c_str(), *r.auc, *r.ci_low, *r.ci_high,
                  r.support_pos + r.support_neg);
    } else {
      std::printf("subset %s|%s: AUC %.3f on %zu images\n", target_node.c_str(),
                  filter_node.c_str(), *r.auc, r.support_pos + r.support_neg);
    }
  }

  if (!roc_dir.empty()) {
    fs::create_directories(roc_dir);
    for (const metrics::NodeResult& nr : report.per_node) {
      if (!nr.roc.defined()) continue;
      plot::save_roc_points(nr.roc.points, roc_dir / (nr.id + "_roc.csv"));
    }
    std::printf("wrote per-node ROC points to %s\n", roc_dir.string().c_str());
  }
  return 0;
}

int cmd_plot(const fs::path& taxonomy_path, const fs::path& manifest_path,
             const fs::path& predictions_path, const std::vector<std::string>& nodes,
             const fs::path& out_dir, int n_boot, std::uint64_t seed) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const Manifest m = load_manifest(manifest_path, t);
  const PredictionMatrix pm = load_predictions(predictions_path);
  check_alignment(t, pm);
  fs::create_directories(out_dir);

  std::unordered_map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& rec : m.records) by_id.emplace(rec.image_id, &rec);

  for (const std::string& node : nodes) {
    const std::size_t col = pm.column_of(node);
    std::vector<double> scores(pm.rows());
    std::vector<std::uint8_t> labels(pm.rows());
    for (std::size_t r = 0; r < pm.rows(); ++r) {
      const auto it = by_id.find(pm.image_ids[r]);
      if (it == by_id.end()) {
        throw MismatchError("prediction row '" + pm.image_ids[r] + "' has no manifest record");
      }
      scores[r] = pm.at(r, col);
      labels[r] = evaluation_positive(t, node, it->second->labels) ? 1 : 0;
    }
    const auto data = plot::make_roc_plot(scores, labels, node, n_boot, Rng::derive(seed, col));
    plot::save_roc_plot(data, out_dir / (node + "_roc.svg"));
    std::printf("%s: %s -> %s\n", node.c_str(), data.legend.c_str(),
                (out_dir / (node + "_roc.svg")).string().c_str());
  }
  return 0;
}

int cmd_explain(const fs::path& taxonomy_path, const fs::path& manifest_path,
                const fs::path& checkpoint_path, const std::string& image_id,
                std::vector<std::string> nodes, int top_k, const fs::path& out_dir,
                const std::string& normalize) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.taxonomy_checksum != t.checksum()) {
    throw MismatchError("checkpoint was trained against a different taxonomy (checksum mismatch)");
  }
  const Manifest m = load_manifest(manifest_path, t);
  const ImageRecord* rec = nullptr;
  for (const ImageRecord& r : m.records) {
    if (r.image_id == image_id) {
      rec = &r;
      break;
    }
  }
  if (!rec) throw DatasetError("image_id '" + image_id + "' not found in the manifest");

  const ModelInput input = load_model_input(m, *rec, preprocess_options(normalize));
  const std::vector<NodeId> output_ids = t.output_ids(ck.model.config().include_specials);
  if (nodes.empty()) {
    const auto ws = ck.model.make_workspace();
    const auto probs = ck.model.forward(input, *ws);
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&probs](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    for (int k = 0; k < top_k && k < static_cast<int>(order.size()); ++k) {
      nodes.push_back(output_ids[order[static_cast<std::size_t>(k)]]);
    }
  }

  fs::create_directories(out_dir);
  const std::vector<Heatmap> maps = gradcam_many(ck.model, t, input, nodes);
  for (const Heatmap& map : maps) {
    Heatmap named = map;
    named.image_id = image_id;
    const fs::path pgm = out_dir / (image_id + "__" + map.node + ".pgm");
    const fs::path ppm = out_dir / (image_id + "__" + map.node + "_overlay.ppm");
    save_heatmap(named, pgm);
    save_overlay(named, input, ppm);
    std::printf("%s -> %s, %s\n", map.node.c_str(), pgm.string().c_str(), ppm.string().c_str());
  }
  return 0;
}

int cmd_consistency(const fs::path& taxonomy_path, const fs::path& predictions_path,
                    double threshold, const fs::path& out_path) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const PredictionMatrix pm = load_predictions(predictions_path);
  if (pm.node_ids != t.output_ids(true)) {
    throw MismatchError("consistency report needs scores for every taxonomy node");
  }
  const ConsistencyReport report = consistency_report(t, pm, threshold);
  if (!out_path.empty()) {
    std::string csv = "child,parent,violations,images\n";
    for (const EdgeConsistency& e : report.per_edge) {
      csv += e.child + "," + e.parent + "," + std::to_string(e.violations) + "," +
             std::to_string(report.images) + "\n";
    }
    write_file(out_path, csv);
  }
  for (const EdgeConsistency& e : report.per_edge) {
    if (e.violations == 0) continue;
    std::printf("%s < %s: %zu/%zu\n", e.child.c_str(), e.parent.c_str(), e.violations,
                report.images);
  }
  std::printf("overall violation rate: %.6f (%zu of %zu image-edge pairs)\n",
              report.overall_rate(), report.total_violations, report.total_pairs);
  return 0;
}

int cmd_preprocess(const fs::path& taxonomy_path, const fs::path& manifest_path,
                   const fs::path& out_dir, const std::string& normalize) {
  const Taxonomy t = load_taxonomy(taxonomy_path);
  const Manifest m = load_manifest(manifest_path, t);
  const PreprocessOptions pre = preprocess_options(normalize);
  fs::create_directories(out_dir);
  parallel_for(m.records.size(), worker_count(), [&](std::size_t i) {
    const ImageRecord& rec = m.records[i];
    save_cached_input(load_model_input(m, rec, pre), out_dir, rec.image_id);
  });
  std::printf("cached %zu preprocessed arrays under %s\n", m.records.size(),
              out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierax: hierarchical multi-label chest x-ray interpretation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hierax 0.1.0");
  app.footer("Worker threads come from the HIERAX_WORKERS environment variable.");

  // taxonomy
  std::string tax_action;
  fs::path tax_file;
  auto* tax = app.add_subcommand("taxonomy", "validate, show or index a taxonomy document");
  tax->add_option("action", tax_action, "validate | show | index")
      ->required()
      ->check(CLI::IsMember({"validate", "show", "index"}));
  tax->add_option("--taxonomy", tax_file, "taxonomy document")->required();

  // propagate
  fs::path pr_tax, pr_manifest, pr_out;
  auto* prop = app.add_subcommand("propagate", "write ancestor-closed target vectors as CSV");
  prop->add_option("--taxonomy", pr_tax)->required();
  prop->add_option("--manifest", pr_manifest)->required();
  prop->add_option("--out", pr_out, "output CSV path")->required();

  // synth
  fs::path sy_tax, sy_out;
  SyntheticConfig sy_cfg;
  std::vector<double> sy_split;
  auto* synth = app.add_subcommand("synth", "generate a planted-glyph synthetic dataset");
  synth->add_option("--taxonomy", sy_tax)->required();
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->add_option("--n", sy_cfg.n_images, "number of images");
  synth->add_option("--size", sy_cfg.image_size, "image side in pixels");
  synth->add_option("--seed", sy_cfg.seed);
  synth->add_option("--leaf-prob", sy_cfg.leaf_probability, "per-leaf inclusion probability");
  synth->add_option("--mono1-frac", sy_cfg.monochrome1_fraction,
                    "fraction of images stored as MonochromeI");
  synth->add_option("--split", sy_split, "train,val,test fractions")->delimiter(',');

  // train
  TrainArgs tr;
  std::string tr_selection = "auc";
  auto* trn = app.add_subcommand("train", "train the classifier and keep the best checkpoint");
  trn->set_config("--config", "", "key-value config file; flags override");
  trn->add_option("--taxonomy", tr.taxonomy)->required();
  trn->add_option("--manifest", tr.manifest)->required();
  trn->add_option("--out", tr.out, "output directory")->required();
  trn->add_option("--epochs", tr.train.epochs);
  trn->add_option("--lr-start", tr.train.lr_start);
  trn->add_option("--lr-end", tr.train.lr_end);
  trn->add_option("--batch-size", tr.train.batch_size);
  trn->add_option("--seed", tr.train.seed);
  trn->add_option("--selection", tr_selection, "checkpoint selection metric: auc | accuracy")
      ->check(CLI::IsMember({"auc", "accuracy"}));
  trn->add_option("--backbone", tr.model.backbone);
  trn->add_option("--head-units", tr.model.head_units);
  trn->add_option("--head-layers", tr.model.head_layers);
  trn->add_option("--dropout", tr.model.dropout);
  trn->add_flag("--include-specials,!--no-include-specials", tr.model.include_specials,
                "include the special labels as flat outputs (default on)");
  trn->add_option("--split", tr.split_fractions, "fractions used when the manifest has no splits")
      ->delimiter(',');
  trn->add_option("--normalize", tr.normalize, "std | variance")
      ->check(CLI::IsMember({"std", "variance"}));

  // predict
  fs::path pd_tax, pd_manifest, pd_ckpt, pd_out;
  std::string pd_split, pd_normalize = "std";
  auto* prd = app.add_subcommand("predict", "score a manifest with a checkpoint");
  prd->add_option("--taxonomy", pd_tax)->required();
  prd->add_option("--manifest", pd_manifest)->required();
  prd->add_option("--checkpoint", pd_ckpt)->required();
  prd->add_option("--out", pd_out, "output CSV path")->required();
  prd->add_option("--split", pd_split, "restrict to one split (train|val|test)");
  prd->add_option("--normalize", pd_normalize)->check(CLI::IsMember({"std", "variance"}));

  // evaluate
  fs::path ev_tax, ev_manifest, ev_pred, ev_out, ev_roc_dir;
  bool ev_ci = true, ev_drop_excluded = false;
  int ev_n_boot = 2000;
  std::uint64_t ev_seed = 0;
  std::string ev_filter, ev_target;
  auto* evl = app.add_subcommand("evaluate", "per-node AUC report with confidence intervals");
  evl->add_option("--taxonomy", ev_tax)->required();
  evl->add_option("--manifest", ev_manifest)->required();
  evl->add_option("--predictions", ev_pred)->required();
  evl->add_option("--out", ev_out, "report CSV path")->required();
  evl->add_flag("--ci,!--no-ci", ev_ci, "bootstrap confidence intervals (default on)");
  evl->add_option("--n-boot", ev_n_boot);
  evl->add_option("--seed", ev_seed);
  evl->add_flag("--drop-excluded", ev_drop_excluded, "drop images labeled 'exclude'");
  evl->add_option("--subset-filter", ev_filter, "restrict to images positive for this node");
  evl->add_option("--subset-target", ev_target, "node evaluated on the subset");
  evl->add_option("--roc-dir", ev_roc_dir, "write per-node ROC point CSVs here");

  // plot
  fs::path pl_tax, pl_manifest, pl_pred, pl_out;
  std::vector<std::string> pl_nodes;
  int pl_n_boot = 500;
  std::uint64_t pl_seed = 0;
  auto* plt = app.add_subcommand("plot", "render ROC curves with shaded CI bands as SVG");
  plt->add_option("--taxonomy", pl_tax)->required();
  plt->add_option("--manifest", pl_manifest)->required();
  plt->add_option("--predictions", pl_pred)->required();
  plt->add_option("--nodes", pl_nodes, "node ids to plot")->required()->delimiter(',');
  plt->add_option("--out", pl_out, "output directory")->required();
  plt->add_option("--n-boot", pl_n_boot);
  plt->add_option("--seed", pl_seed);

  // explain
  fs::path ex_tax, ex_manifest, ex_ckpt, ex_out;
  std::string ex_image, ex_normalize = "std";
  std::vector<std::string> ex_nodes;
  int ex_top = 3;
  auto* exp = app.add_subcommand("explain", "attention heatmaps for one image");
  exp->add_option("--taxonomy", ex_tax)->required();
  exp->add_option("--manifest", ex_manifest)->required();
  exp->add_option("--checkpoint", ex_ckpt)->required();
  exp->add_option("--image-id", ex_image)->required();
  exp->add_option("--nodes", ex_nodes, "node ids; default: top scored")->delimiter(',');
  exp->add_option("--top", ex_top, "how many top-scored nodes when --nodes is absent");
  exp->add_option("--out", ex_out, "output directory")->required();
  exp->add_option("--normalize", ex_normalize)->check(CLI::IsMember({"std", "variance"}));

  // consistency
  fs::path co_tax, co_pred, co_out;
  double co_threshold = 0.5;
  auto* con = app.add_subcommand("consistency", "measure child-on/parent-off violations");
  con->add_option("--taxonomy", co_tax)->required();
  con->add_option("--predictions", co_pred)->required();
  con->add_option("--threshold", co_threshold, "decision threshold in (0,1)");
  con->add_option("--out", co_out, "optional per-edge CSV");

  // preprocess
  fs::path pp_tax, pp_manifest, pp_out;
  std::string pp_normalize = "std";
  auto* pp = app.add_subcommand("preprocess", "write preprocessed arrays to a binary cache");
  pp->add_option("--taxonomy", pp_tax)->required();
  pp->add_option("--manifest", pp_manifest)->required();
  pp->add_option("--out", pp_out, "cache directory")->required();
  pp->add_option("--normalize", pp_normalize)->check(CLI::IsMember({"std", "variance"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (tax->parsed()) return cmd_taxonomy(tax_action, tax_file);
    if (prop->parsed()) return cmd_propagate(pr_tax, pr_manifest, pr_out);
    if (synth->parsed()) return cmd_synth(sy_tax, sy_out, sy_cfg, sy_split);
    if (trn->parsed()) {
      tr.train.selection =
          tr_selection == "auc" ? SelectionMetric::mean_auc : SelectionMetric::exact_match_accuracy;
      return cmd_train(tr);
    }
    if (prd->parsed()) return cmd_predict(pd_tax, pd_manifest, pd_ckpt, pd_out, pd_split, pd_normalize);
    if (evl->parsed()) {
      return cmd_evaluate(ev_tax, ev_manifest, ev_pred, ev_out, ev_ci, ev_n_boot, ev_seed,
                          ev_drop_excluded, ev_filter, ev_target, ev_roc_dir);
    }
    if (plt->parsed()) return cmd_plot(pl_tax, pl_manifest, pl_pred, pl_nodes, pl_out, pl_n_boot, pl_seed);
    if (exp->parsed()) {
      return cmd_explain(ex_tax, ex_manifest, ex_ckpt, ex_image, ex_nodes, ex_top, ex_out,
                         ex_normalize);
    }
    if (con->parsed()) return cmd_consistency(co_tax, co_pred, co_threshold, co_out);
    if (pp->parsed()) return cmd_preprocess(pp_tax, pp_manifest, pp_out, pp_normalize);
  } catch (const MismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const metrics::MetricsError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const ExplainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const HieraxError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "filesystem error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
