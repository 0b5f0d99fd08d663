/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hierax/util.hpp"

namespace hierax {

struct ImagingError : HieraxError {
  using HieraxError::HieraxError;
};

/// MonochromeI displays minimum as white and needs inversion; MonochromeII
/// is the usual minimum-as-black convention.
enum class Photometric { monochrome1, monochrome2 };

const char* photometric_name(Photometric p);
Photometric photometric_from_name(std::string_view name);

/// Raw grayscale radiograph. Pixels are row-major, one sample per pixel,
/// values within the declared bit depth.
struct RawImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8, 12 or 16
  Photometric photometric = Photometric::monochrome2;
  std::vector<std::uint16_t> pixels;

  std::uint16_t max_value() const {
    return static_cast<std::uint16_t>((1u << bit_depth) - 1u);
  }
  std::uint16_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  std::uint16_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

/// 2-D real array; intermediate and final form of preprocessing.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  float& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  double mean() const;
  double variance() const;  // population variance
};

/// Network input: 299x299, zero mean, unit variance (all zeros for the
/// degenerate constant image).
struct ModelInput {
  static constexpr int kSize = 299;
  Plane plane;
};

enum class NormalizeMode {
  std_dev,   // divide by the standard deviation (default)
  variance,  // literal variance division
};

struct PreprocessOptions {
  NormalizeMode normalize = NormalizeMode::std_dev;
};

/// Always inverts: p -> max_range - p, and flips the photometric tag.
RawImage inverted(const RawImage& img);
/// Inverts MonochromeI images so that downstream code sees MonochromeII only.
RawImage invert_if_needed(const RawImage& img);

/// Centered square crop with the side of the smallest axis; floor offsets on
/// the long axis. Never pads, never changes pixel values.
RawImage center_square_crop(const RawImage& img);

/// Bilinear resample of a square image to 299x299 (half-pixel centers).
/// Throws ImagingError on non-square input.
Plane resize_to_model(const RawImage& img);

/// General bilinear resample between arbitrary sizes (half-pixel centers).
Plane resize_plane(const Plane& src, int width, int height);

/// (arr - mean) / max(denominator, 1e-8); denominator is std-dev or variance
/// depending on mode. A constant image maps to all zeros.
Plane normalize(const Plane& arr, NormalizeMode mode = NormalizeMode::std_dev);

/// invert -> crop -> resize -> normalize.
ModelInput preprocess(const RawImage& img, const PreprocessOptions& opts = {});

// --- raster I/O (binary PGM / PPM) ------------------------------------------

/// Loads a binary (P5) PGM. The photometric tag is sidecar information and is
/// left at monochrome2; callers apply the manifest's value. Bit depth is the
/// bit width of maxval (255 -> 8, 4095 -> 12, 65535 -> 16).
RawImage load_pgm(const std::filesystem::path& path);
void save_pgm(const RawImage& img, const std::filesystem::path& path);

/// 8-bit RGB PPM (P6), used for explanation overlays.
void save_ppm_rgb(int width, int height, const std::vector<std::uint8_t>& rgb,
                  const std::filesystem::path& path);

// --- preprocessed binary cache ----------------------------------------------

/// Raw float32 dump of a preprocessed plane, keyed by image_id (one file per
/// image, `<image_id>.f32`).
void save_cached_input(const ModelInput& input, const std::filesystem::path& dir,
                       const std::string& image_id);
ModelInput load_cached_input(const std::filesystem::path& dir, const std::string& image_id);

}  // namespace hierax
