/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace hierax {

const char* projection_name(Projection p) {
  switch (p) {
    case Projection::PA: return "PA";
    case Projection::AP: return "AP";
    case Projection::AP_supine: return "AP-supine";
    case Projection::decubitus: return "decubitus";
    case Projection::lordotic: return "lordotic";
    case Projection::standing: return "standing";
  }
  return "?";
}

Projection projection_from_name(std::string_view name) {
  for (const Projection p : {Projection::PA, Projection::AP, Projection::AP_supine,
                             Projection::decubitus, Projection::lordotic, Projection::standing}) {
    if (name == projection_name(p)) return p;
  }
  throw DatasetError("unknown projection: '" + std::string(name) + "'");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(std::string_view name) {
  for (const Split s : {Split::train, Split::val, Split::test}) {
    if (name == split_name(s)) return s;
  }
  throw DatasetError("unknown split: '" + std::string(name) + "'");
}

std::filesystem::path Manifest::image_path(const ImageRecord& rec) const {
  const std::filesystem::path p(rec.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<const ImageRecord*> Manifest::with_split(Split s) const {
  std::vector<const ImageRecord*> out;
  for (const ImageRecord& rec : records) {
    if (rec.split && *rec.split == s) out.push_back(&rec);
  }
  return out;
}

namespace {

constexpr const char* kManifestHeader = "image_id,patient_id,path,projection,photometric,labels,split";

}  // namespace

Manifest load_manifest(const std::filesystem::path& path, const Taxonomy& t) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty()) throw DatasetError("empty manifest: " + path.string());
  if (trim(lines[0]) != kManifestHeader) {
    throw DatasetError(path.string() + ": manifest header must be exactly '" +
                       std::string(kManifestHeader) + "'");
  }
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen_ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string row = "row " + std::to_string(i + 1);
    const std::vector<std::string> f = split(lines[i], ',');
    if (f.size() != 7) {
      throw DatasetError(path.string() + ": " + row + " has " + std::to_string(f.size()) +
                         " columns, expected 7");
    }
    ImageRecord rec;
    rec.image_id = trim(f[0]);
    rec.patient_id = trim(f[1]);
    rec.path = trim(f[2]);
    if (rec.image_id.empty()) throw DatasetError(path.string() + ": " + row + ": empty image_id");
    if (!seen_ids.insert(rec.image_id).second) {
      throw DatasetError(path.string() + ": " + row + ": duplicate image_id '" + rec.image_id + "'");
    }
    try {
      rec.projection = projection_from_name(trim(f[3]));
      rec.photometric = photometric_from_name(trim(f[4]));
    } catch (const HieraxError& e) {
      throw DatasetError(path.string() + ": " + row + ": " + e.what());
    }
    for (const std::string& raw : split(f[5], '|')) {
      const std::string id = trim(raw);
      if (id.empty()) continue;
      if (!t.contains(id)) {
        throw DatasetError(path.string() + ": " + row + ": unknown label id '" + id + "'");
      }
      rec.labels.labels.push_back(id);
    }
    const std::string sp = trim(f[6]);
    if (!sp.empty()) {
      try {
        rec.split = split_from_name(sp);
      } catch (const HieraxError& e) {
        throw DatasetError(path.string() + ": " + row + ": " + e.what());
      }
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const ImageRecord& rec : m.records) {
    out << rec.image_id << ',' << rec.patient_id << ',' << rec.path << ','
        << projection_name(rec.projection) << ',' << photometric_name(rec.photometric) << ','
        << join(rec.labels.labels, "|") << ',' << (rec.split ? split_name(*rec.split) : "") << '\n';
  }
  write_file(path, out.str());
}

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0) throw DatasetError("split fractions must be >= 0");
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw DatasetError("split fractions must sum to 1");
  }
}

void patient_split(std::vector<ImageRecord>& records, const SplitSpec& spec) {
  spec.validate();
  std::map<std::string, std::size_t> patient_images;  // sorted -> canonical pre-shuffle order
  for (const ImageRecord& rec : records) ++patient_images[rec.patient_id];

  const int nonzero_splits = (spec.train > 0) + (spec.val > 0) + (spec.test > 0);
  if (patient_images.size() < static_cast<std::size_t>(nonzero_splits)) {
    throw DatasetError("need at least " + std::to_string(nonzero_splits) +
                       " distinct patients, got " + std::to_string(patient_images.size()));
  }

  std::vector<std::string> patients;
  patients.reserve(patient_images.size());
  for (const auto& [id, _] : patient_images) patients.push_back(id);
  Rng rng(spec.seed);
  rng.shuffle(patients);

  const double total = static_cast<double>(records.size());
  const long long target_train = std::llround(spec.train * total);
  const long long target_val = std::llround(spec.val * total);

  std::map<std::string, Split> assignment;
  long long in_train = 0, in_val = 0;
  for (const std::string& patient : patients) {
    const long long n = static_cast<long long>(patient_images[patient]);
    if (in_train < target_train) {
      assignment[patient] = Split::train;
      in_train += n;
    } else if (in_val < target_val) {
      assignment[patient] = Split::val;
      in_val += n;
    } else {
      assignment[patient] = Split::test;
    }
  }
  for (ImageRecord& rec : records) rec.split = assignment.at(rec.patient_id);
}

// --- synthetic dataset ---------------------------------------------------------

namespace {

float smoothstep_band(double value, double half_width, double ramp) {
  // 1 inside |value| < half_width, 0 outside, linear ramp between.
  const double d = half_width - std::abs(value);
  return static_cast<float>(std::clamp(d / ramp, 0.0, 1.0));
}

float box_window(double u, double v) {
  const double m = std::min(std::min(u, 1.0 - u), std::min(v, 1.0 - v));
  return static_cast<float>(std::clamp(m / 0.06, 0.0, 1.0));
}

/// Soft indicator of glyph `kind` at normalized box coordinates (u, v).
float glyph_mask(int kind, double u, double v) {
  const double cu = u - 0.5, cv = v - 0.5;
  const double r = std::sqrt(cu * cu + cv * cv) * 2.0;  // 1 at the inscribed circle
  const float win = box_window(u, v);
  switch (kind) {
    case 0:  // filled disc
      return smoothstep_band(r, 0.92, 0.12);
    case 1:  // ring
      return smoothstep_band(r - 0.68, 0.16, 0.08);
    case 2:  // horizontal stripes
      return win * static_cast<float>(std::clamp(std::sin(2.0 * M_PI * v * 3.0) / 0.35, 0.0, 1.0));
    case 3:  // vertical stripes
      return win * static_cast<float>(std::clamp(std::sin(2.0 * M_PI * u * 3.0) / 0.35, 0.0, 1.0));
    case 4: {  // 4x4 checkerboard
      const int cell = (static_cast<int>(u * 4.0) + static_cast<int>(v * 4.0)) & 1;
      return win * static_cast<float>(cell);
    }
    case 5:  // wedge filling the lower-left triangle
      return win * static_cast<float>(std::clamp((1.0 - u - v) / 0.08, 0.0, 1.0));
    case 6:  // plus cross
      return win * std::max(smoothstep_band(cu, 0.14, 0.05), smoothstep_band(cv, 0.14, 0.05));
    case 7:  // diagonal cross
      return win * std::max(smoothstep_band((u - v) / 1.4142, 0.1, 0.05),
                            smoothstep_band((u + v - 1.0) / 1.4142, 0.1, 0.05));
    case 8: {  // hollow frame
      const double d = std::min(std::min(u, 1.0 - u), std::min(v, 1.0 - v));
      return static_cast<float>(std::clamp((d - 0.02) / 0.03, 0.0, 1.0) *
                                std::clamp((0.18 - d) / 0.03, 0.0, 1.0));
    }
    case 9: {  // 3x3 dot lattice
      float best = 0.0f;
      for (const double a : {0.25, 0.5, 0.75}) {
        for (const double b : {0.25, 0.5, 0.75}) {
          const double dr = std::sqrt((u - a) * (u - a) + (v - b) * (v - b));
          best = std::max(best, smoothstep_band(dr, 0.1, 0.04));
        }
      }
      return best;
    }
    case 10:  // diagonal stripes
      return win *
             static_cast<float>(std::clamp(std::sin(2.0 * M_PI * (u + v) * 2.5) / 0.35, 0.0, 1.0));
    case 11:  // soft filled square
      return static_cast<float>(std::clamp((0.4 - std::max(std::abs(cu), std::abs(cv))) / 0.1,
                                           0.0, 1.0));
    default:
      return 0.0f;
  }
}

struct GlyphDraw {
  int leaf_ordinal;
  int x, y, size;
  double delta;
};

}  // namespace

int glyph_kind_for_leaf(int leaf_ordinal) {
  return leaf_ordinal % kGlyphKinds;
}

SyntheticDataset generate_synthetic(const Taxonomy& t, const SyntheticConfig& cfg,
                                    const std::filesystem::path& out_dir) {
  if (cfg.n_images < 1) throw DatasetError("n_images must be >= 1");
  if (cfg.image_size < 32) throw DatasetError("image_size must be >= 32");
  const std::vector<int> leaves = t.leaves(Group::findings);
  if (leaves.empty()) throw DatasetError("taxonomy has no findings leaves to plant glyphs for");

  std::filesystem::create_directories(out_dir / "images");

  const int size = cfg.image_size;
  const int min_glyph = std::max(16, static_cast<int>(std::lround(size * 0.21)));
  const int max_glyph = std::max(min_glyph + 1, static_cast<int>(std::lround(size * 0.38)));

  // Patient grouping and projection come from a dedicated stream so the
  // per-image render streams stay index-addressable.
  SyntheticDataset out;
  out.manifest.base_dir = out_dir;
  Rng meta(Rng::derive(cfg.seed, 0x6d657461));
  int patient_remaining = 0;
  int patient_counter = -1;
  for (int i = 0; i < cfg.n_images; ++i) {
    if (patient_remaining == 0) {
      ++patient_counter;
      patient_remaining = static_cast<int>(meta.uniform_int(1, 3));
    }
    --patient_remaining;
    char image_id[32], patient_id[32];
    std::snprintf(image_id, sizeof(image_id), "synth%05d", i);
    std::snprintf(patient_id, sizeof(patient_id), "p%05d", patient_counter);
    ImageRecord rec;
    rec.image_id = image_id;
    rec.patient_id = patient_id;
    rec.path = "images/" + std::string(image_id) + ".pgm";
    rec.projection = meta.bernoulli(0.5) ? Projection::PA : Projection::AP;
    out.manifest.records.push_back(std::move(rec));
  }

  std::vector<std::vector<GlyphBox>> boxes_per_image(static_cast<std::size_t>(cfg.n_images));

  parallel_for(static_cast<std::size_t>(cfg.n_images), worker_count(), [&](std::size_t i) {
    ImageRecord& rec = out.manifest.records[i];
    Rng rng(Rng::derive(cfg.seed, 0x696d6700 + i));

    const bool mono1 = rng.uniform() < cfg.monochrome1_fraction;

    // Smooth background: base level plus three low-frequency waves.
    const double base = rng.uniform(70.0, 130.0);
    double amp[3], freq[3], theta[3], phase[3];
    for (int w = 0; w < 3; ++w) {
      amp[w] = rng.uniform(5.0, 15.0);
      freq[w] = rng.uniform(0.5, 2.5);
      theta[w] = rng.uniform(0.0, M_PI);
      phase[w] = rng.uniform(0.0, 2.0 * M_PI);
    }

    std::vector<GlyphDraw> draws;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      if (rng.uniform() >= cfg.leaf_probability) continue;
      GlyphDraw d;
      d.leaf_ordinal = static_cast<int>(li);
      d.size = static_cast<int>(rng.uniform_int(min_glyph, max_glyph));
      d.x = static_cast<int>(rng.uniform_int(2, size - d.size - 2));
      d.y = static_cast<int>(rng.uniform_int(2, size - d.size - 2));
      d.delta = rng.uniform(55.0, 85.0);
      draws.push_back(d);
    }

    std::vector<float> canvas(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = base;
        for (int w = 0; w < 3; ++w) {
          const double axis = (x * std::cos(theta[w]) + y * std::sin(theta[w])) / size;
          v += amp[w] * std::cos(2.0 * M_PI * freq[w] * axis + phase[w]);
        }
        canvas[static_cast<std::size_t>(y) * size + x] = static_cast<float>(v);
      }
    }
    for (const GlyphDraw& d : draws) {
      const int kind = glyph_kind_for_leaf(d.leaf_ordinal);
      for (int y = d.y; y < d.y + d.size; ++y) {
        for (int x = d.x; x < d.x + d.size; ++x) {
          const double u = (x - d.x + 0.5) / d.size;
          const double v = (y - d.y + 0.5) / d.size;
          canvas[static_cast<std::size_t>(y) * size + x] +=
              static_cast<float>(d.delta) * glyph_mask(kind, u, v);
        }
      }
    }

    RawImage img;
    img.width = size;
    img.height = size;
    img.bit_depth = 8;
    img.photometric = Photometric::monochrome2;
    img.pixels.resize(canvas.size());
    for (std::size_t p = 0; p < canvas.size(); ++p) {
      const double noisy = canvas[p] + rng.normal() * 8.0;
      img.pixels[p] = static_cast<std::uint16_t>(std::clamp(std::lround(noisy), 0l, 255l));
    }
    if (mono1) {
      img = inverted(img);  // stored inverted; tagged so preprocessing undoes it
    }
    save_pgm(img, out_dir / rec.path);

    rec.photometric = img.photometric;
    for (const GlyphDraw& d : draws) {
      rec.labels.labels.push_back(t.id_of(leaves[static_cast<std::size_t>(d.leaf_ordinal)]));
      boxes_per_image[i].push_back(GlyphBox{rec.image_id,
                                            t.id_of(leaves[static_cast<std::size_t>(d.leaf_ordinal)]),
                                            d.x, d.y, d.size, d.size});
    }
  });

  for (auto& per_image : boxes_per_image) {
    out.boxes.insert(out.boxes.end(), per_image.begin(), per_image.end());
  }
  out.manifest_path = out_dir / "manifest.csv";
  out.boxes_path = out_dir / "boxes.csv";
  save_manifest(out.manifest, out.manifest_path);
  save_boxes(out.boxes, out.boxes_path);
  return out;
}

void save_boxes(const std::vector<GlyphBox>& boxes, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "image_id,node_id,x,y,w,h\n";
  for (const GlyphBox& b : boxes) {
    out << b.image_id << ',' << b.node << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << '\n';
  }
  write_file(path, out.str());
}

std::vector<GlyphBox> load_boxes(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty() || trim(lines[0]) != "image_id,node_id,x,y,w,h") {
    throw DatasetError("malformed boxes file: " + path.string());
  }
  std::vector<GlyphBox> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::vector<std::string> f = split(lines[i], ',');
    if (f.size() != 6) throw DatasetError(path.string() + ": bad row " + std::to_string(i + 1));
    const std::string ctx = path.string() + " row " + std::to_string(i + 1);
    out.push_back(GlyphBox{f[0], f[1], static_cast<int>(parse_long(f[2], ctx)),
                           static_cast<int>(parse_long(f[3], ctx)),
                           static_cast<int>(parse_long(f[4], ctx)),
                           static_cast<int>(parse_long(f[5], ctx))});
  }
  return out;
}

}  // namespace hierax
