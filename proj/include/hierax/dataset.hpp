/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hierax/imaging.hpp"
#include "hierax/labels.hpp"
#include "hierax/taxonomy.hpp"

namespace hierax {

struct DatasetError : HieraxError {
  using HieraxError::HieraxError;
};

enum class Projection { PA, AP, AP_supine, decubitus, lordotic, standing };
enum class Split { train, val, test };

const char* projection_name(Projection p);
Projection projection_from_name(std::string_view name);
const char* split_name(Split s);
Split split_from_name(std::string_view name);

struct ImageRecord {
  std::string image_id;
  std::string patient_id;
  std::string path;  // relative to the manifest directory unless absolute
  Projection projection = Projection::PA;
  Photometric photometric = Photometric::monochrome2;
  LabelSet labels;
  std::optional<Split> split;
};

struct Manifest {
  std::vector<ImageRecord> records;
  std::filesystem::path base_dir;  // directory of the manifest file

  std::filesystem::path image_path(const ImageRecord& rec) const;
  std::vector<const ImageRecord*> with_split(Split s) const;
};

/// CSV header: image_id,patient_id,path,projection,photometric,labels,split.
/// `labels` is pipe-separated node ids; `split` may be empty. Label ids are
/// validated against the taxonomy; errors name the row.
Manifest load_manifest(const std::filesystem::path& path, const Taxonomy& t);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;  // throws DatasetError
};

/// Assigns a split to every record such that all images of one patient land
/// in the same split. Seeded shuffle of patient ids, then greedy fill to the
/// per-split image targets. Deterministic in (records, spec); independent of
/// the input record order.
void patient_split(std::vector<ImageRecord>& records, const SplitSpec& spec);

// --- synthetic planted-glyph dataset -----------------------------------------

struct SyntheticConfig {
  int n_images = 2000;
  int image_size = 299;
  std::uint64_t seed = 0;
  /// Per-leaf inclusion probability; an image with no sampled leaf stays
  /// glyph-free (the "normal" case, recorded with an empty label list).
  double leaf_probability = 0.25;
  /// Fraction of images stored inverted and tagged monochrome1, so the
  /// preprocessing inversion path is exercised end to end.
  double monochrome1_fraction = 0.1;
};

struct GlyphBox {
  std::string image_id;
  NodeId node;
  int x = 0, y = 0, w = 0, h = 0;
};

struct SyntheticDataset {
  Manifest manifest;                 // also written to <out_dir>/manifest.csv
  std::vector<GlyphBox> boxes;       // also written to <out_dir>/boxes.csv
  std::filesystem::path manifest_path;
  std::filesystem::path boxes_path;
};

/// Binds each leaf of the findings tree to a distinct glyph (a deterministic
/// function of the leaf's position among the leaves) and renders n_images
/// noisy radiograph-like PGMs under <out_dir>/images. Bit-identical for a
/// given (taxonomy, config).
SyntheticDataset generate_synthetic(const Taxonomy& t, const SyntheticConfig& cfg,
                                    const std::filesystem::path& out_dir);

void save_boxes(const std::vector<GlyphBox>& boxes, const std::filesystem::path& path);
std::vector<GlyphBox> load_boxes(const std::filesystem::path& path);

/// Glyph kind bound to the i-th findings leaf; exposed for tests.
int glyph_kind_for_leaf(int leaf_ordinal);
constexpr int kGlyphKinds = 12;

}  // namespace hierax
