/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace hierax {

const char* photometric_name(Photometric p) {
  return p == Photometric::monochrome1 ? "monochrome1" : "monochrome2";
}

Photometric photometric_from_name(std::string_view name) {
  if (name == "monochrome1") return Photometric::monochrome1;
  if (name == "monochrome2") return Photometric::monochrome2;
  throw ImagingError("unknown photometric interpretation: '" + std::string(name) + "'");
}

double Plane::mean() const {
  double sum = 0.0;
  for (const float v : values) sum += v;
  return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

double Plane::variance() const {
  if (values.empty()) return 0.0;
  const double m = mean();
  double sum = 0.0;
  for (const float v : values) {
    const double d = v - m;
    sum += d * d;
  }
  return sum / static_cast<double>(values.size());
}

RawImage inverted(const RawImage& img) {
  RawImage out = img;
  const std::uint16_t top = img.max_value();
  for (std::uint16_t& p : out.pixels) p = static_cast<std::uint16_t>(top - p);
  out.photometric = img.photometric == Photometric::monochrome1 ? Photometric::monochrome2
                                                                : Photometric::monochrome1;
  return out;
}

RawImage invert_if_needed(const RawImage& img) {
  if (img.photometric == Photometric::monochrome1) return inverted(img);
  return img;
}

RawImage center_square_crop(const RawImage& img) {
  const int s = std::min(img.width, img.height);
  const int off_x = (img.width - s) / 2;
  const int off_y = (img.height - s) / 2;
  if (s == img.width && s == img.height) return img;
  RawImage out;
  out.width = s;
  out.height = s;
  out.bit_depth = img.bit_depth;
  out.photometric = img.photometric;
  out.pixels.resize(static_cast<std::size_t>(s) * static_cast<std::size_t>(s));
  for (int y = 0; y < s; ++y) {
    const std::uint16_t* src = img.pixels.data() +
        static_cast<std::size_t>(y + off_y) * static_cast<std::size_t>(img.width) + off_x;
    std::memcpy(out.pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(s), src,
                static_cast<std::size_t>(s) * sizeof(std::uint16_t));
  }
  return out;
}

namespace {

// Half-pixel-center bilinear sampling; exact identity when sizes match.
Plane bilinear_resize(const float* src, int src_w, int src_h, int dst_w, int dst_h) {
  Plane out;
  out.width = dst_w;
  out.height = dst_h;
  out.values.resize(static_cast<std::size_t>(dst_w) * static_cast<std::size_t>(dst_h));
  const double sx = static_cast<double>(src_w) / dst_w;
  const double sy = static_cast<double>(src_h) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const double v00 = src[static_cast<std::size_t>(y0) * src_w + x0];
      const double v01 = src[static_cast<std::size_t>(y0) * src_w + x1];
      const double v10 = src[static_cast<std::size_t>(y1) * src_w + x0];
      const double v11 = src[static_cast<std::size_t>(y1) * src_w + x1];
      const double top = v00 + (v01 - v00) * wx;
      const double bot = v10 + (v11 - v10) * wx;
      out.values[static_cast<std::size_t>(y) * dst_w + x] = static_cast<float>(top + (bot - top) * wy);
    }
  }
  return out;
}

}  // namespace

Plane resize_to_model(const RawImage& img) {
  if (img.width != img.height) {
    throw ImagingError("resize_to_model expects a square image, got " + std::to_string(img.width) +
                       "x" + std::to_string(img.height));
  }
  std::vector<float> src(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) src[i] = static_cast<float>(img.pixels[i]);
  return bilinear_resize(src.data(), img.width, img.height, ModelInput::kSize, ModelInput::kSize);
}

Plane resize_plane(const Plane& src, int width, int height) {
  if (src.width < 1 || src.height < 1 || width < 1 || height < 1) {
    throw ImagingError("resize_plane: empty plane");
  }
  return bilinear_resize(src.values.data(), src.width, src.height, width, height);
}

Plane normalize(const Plane& arr, NormalizeMode mode) {
  Plane out = arr;
  const double m = arr.mean();
  const double var = arr.variance();
  const double denom_raw = mode == NormalizeMode::std_dev ? std::sqrt(var) : var;
  const double denom = std::max(denom_raw, 1e-8);
  for (float& v : out.values) v = static_cast<float>((v - m) / denom);
  return out;
}

ModelInput preprocess(const RawImage& img, const PreprocessOptions& opts) {
  const RawImage upright = invert_if_needed(img);
  const RawImage square = center_square_crop(upright);
  const Plane resized = resize_to_model(square);
  return ModelInput{normalize(resized, opts.normalize)};
}

// --- PGM / PPM ---------------------------------------------------------------

namespace {

int next_pnm_token(std::istream& in, const std::filesystem::path& path) {
  // Skips whitespace and '#' comments, then reads one non-negative integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw ImagingError("malformed PNM header: " + path.string());
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1 << 20) throw ImagingError("PNM header value out of range: " + path.string());
    c = in.get();
  }
  return static_cast<int>(value);
}

}  // namespace

RawImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImagingError("cannot open image: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') {
    throw ImagingError("not a binary PGM (P5) file: " + path.string());
  }
  RawImage img;
  img.width = next_pnm_token(in, path);
  img.height = next_pnm_token(in, path);
  const int maxval = next_pnm_token(in, path);
  if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 65535) {
    throw ImagingError("invalid PGM dimensions in " + path.string());
  }
  img.bit_depth = std::max(1, static_cast<int>(std::bit_width(static_cast<unsigned>(maxval))));
  const std::size_t count = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  img.pixels.resize(count);
  if (maxval < 256) {
    std::vector<std::uint8_t> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (!in) throw ImagingError("truncated PGM data: " + path.string());
    for (std::size_t i = 0; i < count; ++i) img.pixels[i] = raw[i];
  } else {
    std::vector<std::uint8_t> raw(count * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 2));
    if (!in) throw ImagingError("truncated PGM data: " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
      img.pixels[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  }
  return img;
}

void save_pgm(const RawImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImagingError("cannot write image: " + path.string());
  const int maxval = img.max_value();
  out << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  const std::size_t count = img.pixels.size();
  if (maxval < 256) {
    std::vector<std::uint8_t> raw(count);
    for (std::size_t i = 0; i < count; ++i) raw[i] = static_cast<std::uint8_t>(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(count));
  } else {
    std::vector<std::uint8_t> raw(count * 2);
    for (std::size_t i = 0; i < count; ++i) {
      raw[2 * i] = static_cast<std::uint8_t>(img.pixels[i] >> 8);
      raw[2 * i + 1] = static_cast<std::uint8_t>(img.pixels[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(count * 2));
  }
  if (!out) throw ImagingError("write failed: " + path.string());
}

void save_ppm_rgb(int width, int height, const std::vector<std::uint8_t>& rgb,
                  const std::filesystem::path& path) {
  if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw ImagingError("save_ppm_rgb: buffer size does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImagingError("cannot write image: " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw ImagingError("write failed: " + path.string());
}

// --- cache --------------------------------------------------------------------

void save_cached_input(const ModelInput& input, const std::filesystem::path& dir,
                       const std::string& image_id) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / (image_id + ".f32");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImagingError("cannot write cache entry: " + path.string());
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(input.plane.width),
                                 static_cast<std::uint32_t>(input.plane.height)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(input.plane.values.data()),
            static_cast<std::streamsize>(input.plane.values.size() * sizeof(float)));
  if (!out) throw ImagingError("write failed: " + path.string());
}

ModelInput load_cached_input(const std::filesystem::path& dir, const std::string& image_id) {
  const std::filesystem::path path = dir / (image_id + ".f32");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImagingError("cannot open cache entry: " + path.string());
  std::uint32_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  ModelInput input;
  input.plane.width = static_cast<int>(dims[0]);
  input.plane.height = static_cast<int>(dims[1]);
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1];
  if (!in || count == 0 || count > (1u << 26)) {
    throw ImagingError("corrupt cache entry: " + path.string());
  }
  input.plane.values.resize(count);
  in.read(reinterpret_cast<char*>(input.plane.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw ImagingError("truncated cache entry: " + path.string());
  return input;
}

}  // namespace hierax
