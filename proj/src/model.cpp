/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "hierax/labels.hpp"
#include "hierax/metrics.hpp"

namespace hierax {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXf>;
using CMapVec = Eigen::Map<const Eigen::VectorXf>;

constexpr double kBceEps = 1e-7;

float sigmoidf(float z) {
  if (z >= 0.0f) {
    const float e = std::exp(-z);
    return 1.0f / (1.0f + e);
  }
  const float e = std::exp(z);
  return e / (1.0f + e);
}

}  // namespace

void ModelConfig::validate() const {
  if (backbone.empty()) throw ModelError("backbone name must not be empty");
  if (head_units < 1) throw ModelError("head_units must be >= 1");
  if (head_layers < 0) throw ModelError("head_layers must be >= 0");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw ModelError("dropout must be in [0,1)");
  if (num_outputs < 1) throw ModelError("num_outputs must be >= 1");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ModelError("epochs must be >= 1");
  if (!(lr_end > 0.0) || !(lr_start >= lr_end)) {
    throw ModelError("learning rates must satisfy lr_start >= lr_end > 0");
  }
  if (batch_size < 1) throw ModelError("batch_size must be >= 1");
}

double lr_at(int epoch, const TrainConfig& tc) {
  tc.validate();
  if (epoch < 0 || epoch >= tc.epochs) {
    throw ModelError("epoch " + std::to_string(epoch) + " outside [0," +
                     std::to_string(tc.epochs) + ")");
  }
  // Endpoints returned exactly; a one-epoch schedule sits at lr_start.
  if (epoch == 0) return tc.lr_start;
  if (epoch == tc.epochs - 1) return tc.lr_end;
  const double progress = static_cast<double>(epoch) / static_cast<double>(tc.epochs - 1);
  return tc.lr_start * std::pow(tc.lr_end / tc.lr_start, progress);
}

double bce_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ModelError("bce_loss: length mismatch");
  if (pred.empty()) throw ModelError("bce_loss: empty vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kBceEps, 1.0 - kBceEps);
    const double t = target[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(pred.size());
}

std::vector<double> bce_loss_gradient(std::span<const double> pred,
                                      std::span<const double> target) {
  if (pred.size() != target.size()) throw ModelError("bce_loss_gradient: length mismatch");
  std::vector<double> grad(pred.size());
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kBceEps, 1.0 - kBceEps);
    const double t = target[i];
    grad[i] = (-t / p + (1.0 - t) / (1.0 - p)) / n;
  }
  return grad;
}

// --- toy convolutional backbone -------------------------------------------------

namespace {

struct ConvSpec {
  int in_c, out_c, k, stride, pad;
  int in_size, out_size;  // spatial, filled in at construction
};

// Strided stack for 299x299 single-channel inputs; feature map 64x19x19.
// Parameter count: 60,864 floats.
const int kInputSize = ModelInput::kSize;

std::vector<ConvSpec> toy_spec() {
  std::vector<ConvSpec> spec = {
      {1, 16, 7, 4, 3, 0, 0},
      {16, 32, 3, 2, 1, 0, 0},
      {32, 64, 3, 2, 1, 0, 0},
      {64, 64, 3, 1, 1, 0, 0},
  };
  int size = kInputSize;
  for (ConvSpec& s : spec) {
    s.in_size = size;
    s.out_size = (size + 2 * s.pad - s.k) / s.stride + 1;
    size = s.out_size;
  }
  return spec;
}

void im2col(const float* input, const ConvSpec& s, float* col) {
  const int K = s.in_c * s.k * s.k;
  const int P = s.out_size * s.out_size;
  for (int ic = 0; ic < s.in_c; ++ic) {
    const float* in_plane = input + static_cast<std::size_t>(ic) * s.in_size * s.in_size;
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        const int r = (ic * s.k + ky) * s.k + kx;
        float* row = col + static_cast<std::size_t>(r) * P;
        for (int oy = 0; oy < s.out_size; ++oy) {
          const int iy = oy * s.stride + ky - s.pad;
          float* dst = row + static_cast<std::size_t>(oy) * s.out_size;
          if (iy < 0 || iy >= s.in_size) {
            std::memset(dst, 0, static_cast<std::size_t>(s.out_size) * sizeof(float));
            continue;
          }
          const float* src = in_plane + static_cast<std::size_t>(iy) * s.in_size;
          for (int ox = 0; ox < s.out_size; ++ox) {
            const int ix = ox * s.stride + kx - s.pad;
            dst[ox] = (ix >= 0 && ix < s.in_size) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
  (void)K;
}

void col2im_add(const float* dcol, const ConvSpec& s, float* dinput) {
  const int P = s.out_size * s.out_size;
  for (int ic = 0; ic < s.in_c; ++ic) {
    float* din_plane = dinput + static_cast<std::size_t>(ic) * s.in_size * s.in_size;
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        const int r = (ic * s.k + ky) * s.k + kx;
        const float* row = dcol + static_cast<std::size_t>(r) * P;
        for (int oy = 0; oy < s.out_size; ++oy) {
          const int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.in_size) continue;
          float* dst = din_plane + static_cast<std::size_t>(iy) * s.in_size;
          const float* src = row + static_cast<std::size_t>(oy) * s.out_size;
          for (int ox = 0; ox < s.out_size; ++ox) {
            const int ix = ox * s.stride + kx - s.pad;
            if (ix >= 0 && ix < s.in_size) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

class ToyCnnBackbone final : public Backbone {
 public:
  ToyCnnBackbone() : spec_(toy_spec()) {
    std::size_t offset = 0;
    for (const ConvSpec& s : spec_) {
      w_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(s.out_c) * s.in_c * s.k * s.k;
      b_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(s.out_c);
    }
    total_params_ = offset;
  }

  std::string name() const override { return "toy-cnn"; }

  FeatureShape feature_shape() const override {
    const ConvSpec& last = spec_.back();
    return FeatureShape{last.out_c, last.out_size, last.out_size};
  }

  std::size_t param_count() const override { return total_params_; }

  void init_params(std::span<float> params, Rng& rng) const override {
    for (std::size_t l = 0; l < spec_.size(); ++l) {
      const ConvSpec& s = spec_[l];
      const int fan_in = s.in_c * s.k * s.k;
      const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
      const std::size_t w_count = static_cast<std::size_t>(s.out_c) * fan_in;
      for (std::size_t i = 0; i < w_count; ++i) {
        params[w_offsets_[l] + i] = stddev * static_cast<float>(rng.normal());
      }
      for (int i = 0; i < s.out_c; ++i) params[b_offsets_[l] + i] = 0.0f;
    }
  }

  struct Ws final : Backbone::Workspace {
    std::vector<std::vector<float>> acts;  // post-ReLU output of each conv
    std::vector<std::vector<float>> cols;  // im2col buffers kept for backward
    std::vector<float> grad_cur, grad_prev, dcol;
  };

  std::unique_ptr<Workspace> make_workspace() const override {
    auto ws = std::make_unique<Ws>();
    std::size_t max_act = 0, max_col = 0;
    for (const ConvSpec& s : spec_) {
      const std::size_t act = static_cast<std::size_t>(s.out_c) * s.out_size * s.out_size;
      const std::size_t col =
          static_cast<std::size_t>(s.in_c) * s.k * s.k * s.out_size * s.out_size;
      ws->acts.emplace_back(act);
      ws->cols.emplace_back(col);
      max_act = std::max(max_act, act);
      max_col = std::max(max_col, col);
    }
    ws->grad_cur.resize(max_act);
    ws->grad_prev.resize(max_act);
    ws->dcol.resize(max_col);
    return ws;
  }

  const float* forward(std::span<const float> input, std::span<const float> params,
                       Workspace& ws_base) const override {
    Ws& ws = static_cast<Ws&>(ws_base);
    const float* cur = input.data();
    for (std::size_t l = 0; l < spec_.size(); ++l) {
      const ConvSpec& s = spec_[l];
      const int K = s.in_c * s.k * s.k;
      const int P = s.out_size * s.out_size;
      im2col(cur, s, ws.cols[l].data());
      CMapMat w(params.data() + w_offsets_[l], s.out_c, K);
      CMapMat col(ws.cols[l].data(), K, P);
      MapMat out(ws.acts[l].data(), s.out_c, P);
      out.noalias() = w * col;
      for (int oc = 0; oc < s.out_c; ++oc) {
        const float b = params[b_offsets_[l] + static_cast<std::size_t>(oc)];
        float* row = ws.acts[l].data() + static_cast<std::size_t>(oc) * P;
        for (int p = 0; p < P; ++p) row[p] = std::max(row[p] + b, 0.0f);
      }
      cur = ws.acts[l].data();
    }
    return cur;
  }

  void backward(std::span<const float> grad_features, std::span<const float> params,
                Workspace& ws_base, std::span<float> grad_params) const override {
    Ws& ws = static_cast<Ws&>(ws_base);
    std::copy(grad_features.begin(), grad_features.end(), ws.grad_cur.begin());
    for (int l = static_cast<int>(spec_.size()) - 1; l >= 0; --l) {
      const ConvSpec& s = spec_[static_cast<std::size_t>(l)];
      const int K = s.in_c * s.k * s.k;
      const int P = s.out_size * s.out_size;
      const std::size_t count = static_cast<std::size_t>(s.out_c) * P;
      // ReLU mask from the stored activations.
      for (std::size_t i = 0; i < count; ++i) {
        if (ws.acts[static_cast<std::size_t>(l)][i] <= 0.0f) ws.grad_cur[i] = 0.0f;
      }
      CMapMat dy(ws.grad_cur.data(), s.out_c, P);
      CMapMat col(ws.cols[static_cast<std::size_t>(l)].data(), K, P);
      MapMat dw(grad_params.data() + w_offsets_[static_cast<std::size_t>(l)], s.out_c, K);
      dw.noalias() += dy * col.transpose();
      for (int oc = 0; oc < s.out_c; ++oc) {
        grad_params[b_offsets_[static_cast<std::size_t>(l)] + static_cast<std::size_t>(oc)] +=
            dy.row(oc).sum();
      }
      if (l == 0) break;  // input gradient is never needed
      CMapMat w(params.data() + w_offsets_[static_cast<std::size_t>(l)], s.out_c, K);
      MapMat dcol(ws.dcol.data(), K, P);
      dcol.noalias() = w.transpose() * dy;
      const ConvSpec& prev = spec_[static_cast<std::size_t>(l - 1)];
      const std::size_t prev_count =
          static_cast<std::size_t>(prev.out_c) * prev.out_size * prev.out_size;
      std::fill(ws.grad_prev.begin(), ws.grad_prev.begin() + static_cast<long>(prev_count), 0.0f);
      col2im_add(ws.dcol.data(), s, ws.grad_prev.data());
      std::swap(ws.grad_cur, ws.grad_prev);
    }
  }

 private:
  std::vector<ConvSpec> spec_;
  std::vector<std::size_t> w_offsets_, b_offsets_;
  std::size_t total_params_ = 0;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(const std::string& name) {
  if (name == "toy-cnn") return std::make_unique<ToyCnnBackbone>();
  throw ModelError("unknown backbone name: '" + name + "'");
}

// --- model -----------------------------------------------------------------------

Model::Model(const Model& other)
    : cfg_(other.cfg_), params_(other.params_), offsets_(other.offsets_) {
  if (other.backbone_) backbone_ = make_backbone(cfg_.backbone);
}

Model& Model::operator=(const Model& other) {
  if (this == &other) return *this;
  cfg_ = other.cfg_;
  params_ = other.params_;
  offsets_ = other.offsets_;
  backbone_ = other.backbone_ ? make_backbone(cfg_.backbone) : nullptr;
  return *this;
}

Model::~Model() = default;

namespace {

// Head parameter layout: per hidden layer W then b, then the output W and b.
std::vector<std::size_t> head_offsets(const ModelConfig& cfg, std::size_t backbone_params,
                                      int gap_channels, std::size_t* total) {
  std::vector<std::size_t> offsets;
  std::size_t off = backbone_params;
  int in_units = gap_channels;
  for (int l = 0; l < cfg.head_layers; ++l) {
    offsets.push_back(off);
    off += static_cast<std::size_t>(cfg.head_units) * static_cast<std::size_t>(in_units);
    offsets.push_back(off);
    off += static_cast<std::size_t>(cfg.head_units);
    in_units = cfg.head_units;
  }
  offsets.push_back(off);
  off += static_cast<std::size_t>(cfg.num_outputs) * static_cast<std::size_t>(in_units);
  offsets.push_back(off);
  off += static_cast<std::size_t>(cfg.num_outputs);
  *total = off;
  return offsets;
}

}  // namespace

Model Model::build(const ModelConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.backbone_ = make_backbone(cfg.backbone);
  std::size_t total = 0;
  m.offsets_ = head_offsets(cfg, m.backbone_->param_count(), m.backbone_->feature_shape().channels,
                            &total);
  m.params_.assign(total, 0.0f);

  Rng rng(Rng::derive(init_seed, 0x1217));
  m.backbone_->init_params(std::span<float>(m.params_.data(), m.backbone_->param_count()), rng);
  int in_units = m.backbone_->feature_shape().channels;
  for (int l = 0; l < cfg.head_layers; ++l) {
    const float stddev = std::sqrt(2.0f / static_cast<float>(in_units));
    const std::size_t w_off = m.offsets_[2 * static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.head_units) * in_units; ++i) {
      m.params_[w_off + i] = stddev * static_cast<float>(rng.normal());
    }
    in_units = cfg.head_units;
  }
  const float out_std = std::sqrt(1.0f / static_cast<float>(in_units));
  const std::size_t wout_off = m.offsets_[2 * static_cast<std::size_t>(cfg.head_layers)];
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.num_outputs) * in_units; ++i) {
    m.params_[wout_off + i] = out_std * static_cast<float>(rng.normal());
  }
  return m;
}

Model rebuild_model(const ModelConfig& cfg, std::vector<float> params) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.backbone_ = make_backbone(cfg.backbone);
  std::size_t total = 0;
  m.offsets_ = head_offsets(cfg, m.backbone_->param_count(), m.backbone_->feature_shape().channels,
                            &total);
  if (params.size() != total) {
    throw ModelError("checkpoint has " + std::to_string(params.size()) + " parameters, expected " +
                     std::to_string(total));
  }
  m.params_ = std::move(params);
  return m;
}

std::pair<std::size_t, std::size_t> Model::output_layer_range() const {
  const std::size_t w_off = offsets_[2 * static_cast<std::size_t>(cfg_.head_layers)];
  return {w_off, params_.size() - w_off};
}

std::unique_ptr<Model::Workspace> Model::make_workspace() const {
  auto ws = std::make_unique<Workspace>();
  ws->backbone = backbone_->make_workspace();
  const FeatureShape fs = backbone_->feature_shape();
  ws->gap.resize(static_cast<std::size_t>(fs.channels));
  for (int l = 0; l < cfg_.head_layers; ++l) {
    ws->act.emplace_back(static_cast<std::size_t>(cfg_.head_units));
    ws->hidden.emplace_back(static_cast<std::size_t>(cfg_.head_units));
    ws->drop_mask.emplace_back(static_cast<std::size_t>(cfg_.head_units));
  }
  ws->logits.resize(static_cast<std::size_t>(cfg_.num_outputs));
  ws->probs.resize(static_cast<std::size_t>(cfg_.num_outputs));
  const std::size_t max_units =
      std::max<std::size_t>(static_cast<std::size_t>(std::max(cfg_.head_units, cfg_.num_outputs)),
                            ws->gap.size());
  ws->grad_h.resize(max_units);
  ws->grad_z.resize(max_units);
  ws->grad_features.resize(fs.count());
  return ws;
}

std::span<const float> Model::forward(const ModelInput& input, Workspace& ws,
                                      Rng* dropout_rng) const {
  if (input.plane.width != ModelInput::kSize || input.plane.height != ModelInput::kSize) {
    throw ModelError("model input must be 299x299");
  }
  const FeatureShape fs = backbone_->feature_shape();
  ws.features = backbone_->forward(input.plane.values, params_, *ws.backbone);

  const int spatial = fs.height * fs.width;
  for (int c = 0; c < fs.channels; ++c) {
    const float* plane = ws.features + static_cast<std::size_t>(c) * spatial;
    float sum = 0.0f;
    for (int p = 0; p < spatial; ++p) sum += plane[p];
    ws.gap[static_cast<std::size_t>(c)] = sum / static_cast<float>(spatial);
  }

  ws.trained_forward = dropout_rng != nullptr && cfg_.dropout > 0.0f;
  const float* cur = ws.gap.data();
  int in_units = fs.channels;
  for (int l = 0; l < cfg_.head_layers; ++l) {
    const std::size_t w_off = offsets_[2 * static_cast<std::size_t>(l)];
    const std::size_t b_off = offsets_[2 * static_cast<std::size_t>(l) + 1];
    CMapMat w(params_.data() + w_off, cfg_.head_units, in_units);
    CMapVec x(cur, in_units);
    MapVec a(ws.act[static_cast<std::size_t>(l)].data(), cfg_.head_units);
    a.noalias() = w * x;
    for (int i = 0; i < cfg_.head_units; ++i) {
      a[i] = std::max(a[i] + params_[b_off + static_cast<std::size_t>(i)], 0.0f);
    }
    auto& hidden = ws.hidden[static_cast<std::size_t>(l)];
    if (ws.trained_forward) {
      const float keep = 1.0f - cfg_.dropout;
      auto& mask = ws.drop_mask[static_cast<std::size_t>(l)];
      for (int i = 0; i < cfg_.head_units; ++i) {
        mask[static_cast<std::size_t>(i)] =
            dropout_rng->uniform() < cfg_.dropout ? 0.0f : 1.0f / keep;
        hidden[static_cast<std::size_t>(i)] = a[i] * mask[static_cast<std::size_t>(i)];
      }
    } else {
      std::copy(ws.act[static_cast<std::size_t>(l)].begin(),
                ws.act[static_cast<std::size_t>(l)].end(), hidden.begin());
    }
    cur = hidden.data();
    in_units = cfg_.head_units;
  }

  const std::size_t wout_off = offsets_[2 * static_cast<std::size_t>(cfg_.head_layers)];
  const std::size_t bout_off = offsets_[2 * static_cast<std::size_t>(cfg_.head_layers) + 1];
  CMapMat w(params_.data() + wout_off, cfg_.num_outputs, in_units);
  CMapVec x(cur, in_units);
  MapVec z(ws.logits.data(), cfg_.num_outputs);
  z.noalias() = w * x;
  for (int i = 0; i < cfg_.num_outputs; ++i) {
    z[i] += params_[bout_off + static_cast<std::size_t>(i)];
    // Clamp keeps predictions strictly inside (0,1) even at saturation.
    ws.probs[static_cast<std::size_t>(i)] =
        std::clamp(sigmoidf(z[i]), 1e-7f, 1.0f - 1e-7f);
  }
  return ws.probs;
}

std::span<const float> Model::logits(const Workspace& ws) const {
  return ws.logits;
}

const float* Model::features(const Workspace& ws) const {
  return ws.features;
}

void Model::backward(std::span<const float> grad_logits, Workspace& ws,
                     std::span<float> grad) const {
  const FeatureShape fs = backbone_->feature_shape();
  const int last_units = cfg_.head_layers > 0 ? cfg_.head_units : fs.channels;
  const float* last_hidden =
      cfg_.head_layers > 0 ? ws.hidden[static_cast<std::size_t>(cfg_.head_layers - 1)].data()
                           : ws.gap.data();

  // Output layer.
  const std::size_t wout_off = offsets_[2 * static_cast<std::size_t>(cfg_.head_layers)];
  const std::size_t bout_off = offsets_[2 * static_cast<std::size_t>(cfg_.head_layers) + 1];
  {
    CMapVec dz(grad_logits.data(), cfg_.num_outputs);
    CMapVec h(last_hidden, last_units);
    MapMat dw(grad.data() + wout_off, cfg_.num_outputs, last_units);
    dw.noalias() += dz * h.transpose();
    for (int i = 0; i < cfg_.num_outputs; ++i) {
      grad[bout_off + static_cast<std::size_t>(i)] += grad_logits[static_cast<std::size_t>(i)];
    }
    CMapMat w(params_.data() + wout_off, cfg_.num_outputs, last_units);
    MapVec dh(ws.grad_h.data(), last_units);
    dh.noalias() = w.transpose() * dz;
  }

  // Hidden layers in reverse.
  for (int l = cfg_.head_layers - 1; l >= 0; --l) {
    const int in_units = l > 0 ? cfg_.head_units : fs.channels;
    const float* layer_input = l > 0 ? ws.hidden[static_cast<std::size_t>(l - 1)].data()
                                     : ws.gap.data();
    const auto& a = ws.act[static_cast<std::size_t>(l)];
    for (int i = 0; i < cfg_.head_units; ++i) {
      float g = ws.grad_h[static_cast<std::size_t>(i)];
      if (ws.trained_forward) g *= ws.drop_mask[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      ws.grad_z[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)] > 0.0f ? g : 0.0f;
    }
    const std::size_t w_off = offsets_[2 * static_cast<std::size_t>(l)];
    const std::size_t b_off = offsets_[2 * static_cast<std::size_t>(l) + 1];
    CMapVec dz(ws.grad_z.data(), cfg_.head_units);
    CMapVec x(layer_input, in_units);
    MapMat dw(grad.data() + w_off, cfg_.head_units, in_units);
    dw.noalias() += dz * x.transpose();
    for (int i = 0; i < cfg_.head_units; ++i) {
      grad[b_off + static_cast<std::size_t>(i)] += ws.grad_z[static_cast<std::size_t>(i)];
    }
    CMapMat w(params_.data() + w_off, cfg_.head_units, in_units);
    MapVec dh(ws.grad_h.data(), in_units);
    dh.noalias() = w.transpose() * dz;
  }

  // Spread the pooled gradient uniformly over the feature map.
  const int spatial = fs.height * fs.width;
  const float inv = 1.0f / static_cast<float>(spatial);
  for (int c = 0; c < fs.channels; ++c) {
    const float g = ws.grad_h[static_cast<std::size_t>(c)] * inv;
    float* dst = ws.grad_features.data() + static_cast<std::size_t>(c) * spatial;
    for (int p = 0; p < spatial; ++p) dst[p] = g;
  }
  backbone_->backward(ws.grad_features, params_, *ws.backbone, grad);
}

const float* Model::grad_wrt_features(int output_index, Workspace& ws) const {
  if (output_index < 0 || output_index >= cfg_.num_outputs) {
    throw ModelError("output index " + std::to_string(output_index) + " out of range");
  }
  if (ws.trained_forward) {
    throw ModelError("grad_wrt_features requires an evaluation-mode forward pass");
  }
  const FeatureShape fs = backbone_->feature_shape();
  const int last_units = cfg_.head_layers > 0 ? cfg_.head_units : fs.channels;

  const std::size_t wout_off = offsets_[2 * static_cast<std::size_t>(cfg_.head_layers)];
  const float* w_row = params_.data() + wout_off +
                       static_cast<std::size_t>(output_index) * static_cast<std::size_t>(last_units);
  std::copy(w_row, w_row + last_units, ws.grad_h.begin());

  for (int l = cfg_.head_layers - 1; l >= 0; --l) {
    const int in_units = l > 0 ? cfg_.head_units : fs.channels;
    const auto& a = ws.act[static_cast<std::size_t>(l)];
    for (int i = 0; i < cfg_.head_units; ++i) {
      ws.grad_z[static_cast<std::size_t>(i)] =
          a[static_cast<std::size_t>(i)] > 0.0f ? ws.grad_h[static_cast<std::size_t>(i)] : 0.0f;
    }
    const std::size_t w_off = offsets_[2 * static_cast<std::size_t>(l)];
    CMapMat w(params_.data() + w_off, cfg_.head_units, in_units);
    CMapVec dz(ws.grad_z.data(), cfg_.head_units);
    MapVec dh(ws.grad_h.data(), in_units);
    dh.noalias() = w.transpose() * dz;
  }

  const int spatial = fs.height * fs.width;
  const float inv = 1.0f / static_cast<float>(spatial);
  for (int c = 0; c < fs.channels; ++c) {
    const float g = ws.grad_h[static_cast<std::size_t>(c)] * inv;
    float* dst = ws.grad_features.data() + static_cast<std::size_t>(c) * spatial;
    for (int p = 0; p < spatial; ++p) dst[p] = g;
  }
  return ws.grad_features.data();
}

// --- training ----------------------------------------------------------------------

ModelInput load_model_input(const Manifest& m, const ImageRecord& rec,
                            const PreprocessOptions& pre) {
  try {
    RawImage img = load_pgm(m.image_path(rec));
    img.photometric = rec.photometric;  // sidecar field from the manifest
    return preprocess(img, pre);
  } catch (const HieraxError& e) {
    throw ModelError("image '" + rec.image_id + "': " + e.what());
  }
}

namespace {

class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0f), v_(n, 0.0f) {}

  void step(std::span<float> params, std::span<const float> grad, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = static_cast<float>(kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i]);
      v_[i] = static_cast<float>(kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i]);
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + kEps));
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<float> m_, v_;
  long t_ = 0;
};

std::vector<float> target_for(const Taxonomy& t, const std::vector<int>& output_indices,
                              const ImageRecord& rec) {
  const TargetVector tv = propagate(t, rec.labels);
  std::vector<float> target(output_indices.size());
  for (std::size_t i = 0; i < output_indices.size(); ++i) {
    target[i] = static_cast<float>(tv.bits[static_cast<std::size_t>(output_indices[i])]);
  }
  return target;
}

double image_bce(std::span<const float> probs, std::span<const float> target) {
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), kBceEps, 1.0 - kBceEps);
    const double t = target[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(probs.size());
}

/// Scores a record set with the current weights; rows in record order.
std::vector<std::vector<float>> predict_raw(const Model& model, const Manifest& manifest,
                                            const std::vector<const ImageRecord*>& records,
                                            const PreprocessOptions& pre) {
  std::vector<std::vector<float>> rows(records.size());
  const unsigned workers = worker_count();
  const std::size_t n = records.size();
  const std::size_t chunk = (n + workers - 1) / std::max<std::size_t>(1, workers);
  parallel_for(std::min<std::size_t>(workers, n), workers, [&](std::size_t w) {
    auto ws = model.make_workspace();
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    for (std::size_t i = begin; i < end; ++i) {
      const ModelInput input = load_model_input(manifest, *records[i], pre);
      const auto probs = model.forward(input, *ws);
      rows[i].assign(probs.begin(), probs.end());
    }
  });
  return rows;
}

}  // namespace

TrainResult train(const Taxonomy& t, const Manifest& manifest,
                  const std::vector<const ImageRecord*>& train_records,
                  const std::vector<const ImageRecord*>& val_records, Model model,
                  const TrainConfig& tc, const PreprocessOptions& pre,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  tc.validate();
  model.config().validate();
  if (train_records.empty()) throw ModelError("empty training set");
  const std::vector<int> output_indices = t.output_indices(model.config().include_specials);
  if (static_cast<int>(output_indices.size()) != model.config().num_outputs) {
    throw ModelError("model has " + std::to_string(model.config().num_outputs) +
                     " outputs but the taxonomy provides " +
                     std::to_string(output_indices.size()));
  }

  std::vector<std::vector<float>> train_targets(train_records.size());
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    train_targets[i] = target_for(t, output_indices, *train_records[i]);
  }
  std::vector<std::vector<float>> val_targets(val_records.size());
  std::vector<std::vector<std::uint8_t>> val_eval_labels(output_indices.size());
  for (std::size_t i = 0; i < val_records.size(); ++i) {
    val_targets[i] = target_for(t, output_indices, *val_records[i]);
  }
  for (std::size_t c = 0; c < output_indices.size(); ++c) {
    val_eval_labels[c].resize(val_records.size());
    for (std::size_t i = 0; i < val_records.size(); ++i) {
      val_eval_labels[c][i] =
          evaluation_positive(t, t.id_of(output_indices[c]), val_records[i]->labels) ? 1 : 0;
    }
  }

  const std::size_t n_params = model.param_count();
  const int batch = tc.batch_size;
  std::vector<std::unique_ptr<Model::Workspace>> slots;
  std::vector<std::vector<float>> slot_grads;
  std::vector<double> slot_losses(static_cast<std::size_t>(batch), 0.0);
  for (int b = 0; b < batch; ++b) {
    slots.push_back(model.make_workspace());
    slot_grads.emplace_back(n_params, 0.0f);
  }

  Adam adam(n_params);
  std::vector<float> grad(n_params, 0.0f);
  const unsigned workers = worker_count();

  TrainResult result;
  std::vector<float> best_params(model.params().begin(), model.params().end());
  double best_metric = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<std::size_t> order(train_records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = lr_at(epoch, tc);
    Rng shuffle_rng(Rng::derive(tc.seed, 0xE50000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    const std::size_t n_batches = (order.size() + static_cast<std::size_t>(batch) - 1) /
                                  static_cast<std::size_t>(batch);
    for (std::size_t step = 0; step < n_batches; ++step) {
      const std::size_t begin = step * static_cast<std::size_t>(batch);
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(batch),
                                                      order.size() - begin);
      parallel_for(count, workers, [&](std::size_t k) {
        const std::size_t rec_ix = order[begin + k];
        const ImageRecord& rec = *train_records[rec_ix];
        std::fill(slot_grads[k].begin(), slot_grads[k].end(), 0.0f);
        const ModelInput input = load_model_input(manifest, rec, pre);
        const std::uint64_t stream = 0xD0000000ULL ^
                                     (static_cast<std::uint64_t>(epoch) << 40) ^
                                     (static_cast<std::uint64_t>(step) << 16) ^ k;
        Rng dropout_rng(Rng::derive(tc.seed, stream));
        const auto probs = model.forward(input, *slots[k], &dropout_rng);
        const auto& target = train_targets[rec_ix];
        slot_losses[k] = image_bce(probs, target);
        std::vector<float> grad_logits(probs.size());
        const float inv_n = 1.0f / static_cast<float>(probs.size());
        for (std::size_t j = 0; j < probs.size(); ++j) {
          grad_logits[j] = (probs[j] - target[j]) * inv_n;
        }
        model.backward(grad_logits, *slots[k], slot_grads[k]);
      });

      double batch_loss = 0.0;
      for (std::size_t k = 0; k < count; ++k) batch_loss += slot_losses[k];
      if (!std::isfinite(batch_loss)) {
        throw ModelError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                         std::to_string(step) + "; aborting");
      }
      epoch_loss_sum += batch_loss;

      const float inv_count = 1.0f / static_cast<float>(count);
      std::fill(grad.begin(), grad.end(), 0.0f);
      for (std::size_t k = 0; k < count; ++k) {
        const auto& g = slot_grads[k];
        for (std::size_t i = 0; i < n_params; ++i) grad[i] += g[i];
      }
      for (std::size_t i = 0; i < n_params; ++i) grad[i] *= inv_count;
      adam.step(model.params(), grad, lr);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = epoch_loss_sum / static_cast<double>(train_records.size());

    if (!val_records.empty()) {
      const auto val_rows = predict_raw(model, manifest, val_records, pre);
      double val_loss_sum = 0.0;
      for (std::size_t i = 0; i < val_records.size(); ++i) {
        val_loss_sum += image_bce(val_rows[i], val_targets[i]);
      }
      stats.val_loss = val_loss_sum / static_cast<double>(val_records.size());

      if (tc.selection == SelectionMetric::mean_auc) {
        double sum = 0.0;
        std::size_t defined = 0;
        std::vector<double> col(val_records.size());
        for (std::size_t c = 0; c < output_indices.size(); ++c) {
          for (std::size_t i = 0; i < val_records.size(); ++i) {
            col[i] = val_rows[i][c];
          }
          if (const auto a = metrics::auc(col, val_eval_labels[c])) {
            sum += *a;
            ++defined;
          }
        }
        stats.val_metric = defined > 0 ? sum / static_cast<double>(defined) : 0.5;
      } else {
        std::size_t exact = 0;
        for (std::size_t i = 0; i < val_records.size(); ++i) {
          bool all = true;
          for (std::size_t j = 0; j < val_rows[i].size(); ++j) {
            const bool on = val_rows[i][j] >= 0.5f;
            if (on != (val_targets[i][j] >= 0.5f)) {
              all = false;
              break;
            }
          }
          if (all) ++exact;
        }
        stats.val_metric = static_cast<double>(exact) / static_cast<double>(val_records.size());
      }
    }

    if (stats.val_metric > best_metric) {
      best_metric = stats.val_metric;
      best_epoch = epoch;
      best_params.assign(model.params().begin(), model.params().end());
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }

  std::copy(best_params.begin(), best_params.end(), model.params().begin());
  result.model = std::move(model);
  result.best_epoch = best_epoch;
  return result;
}

PredictionMatrix predict(const Model& model, const Taxonomy& t, const Manifest& manifest,
                         const std::vector<const ImageRecord*>& records,
                         const PreprocessOptions& pre) {
  const std::vector<int> output_indices = t.output_indices(model.config().include_specials);
  if (static_cast<int>(output_indices.size()) != model.config().num_outputs) {
    throw ModelError("model outputs do not match the taxonomy (" +
                     std::to_string(model.config().num_outputs) + " vs " +
                     std::to_string(output_indices.size()) + ")");
  }
  PredictionMatrix m;
  for (const int ix : output_indices) m.node_ids.push_back(t.id_of(ix));
  m.image_ids.reserve(records.size());
  for (const ImageRecord* rec : records) m.image_ids.push_back(rec->image_id);
  m.values.assign(records.size() * output_indices.size(), 0.0);

  const auto rows = predict_raw(model, manifest, records, pre);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m.at(r, c) = static_cast<double>(rows[r][c]);
    }
  }
  return m;
}

// --- checkpoints ---------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'X', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const Model& model, std::uint64_t taxonomy_checksum,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, taxonomy_checksum);
  const ModelConfig& cfg = model.config();
  const std::uint32_t name_len = static_cast<std::uint32_t>(cfg.backbone.size());
  write_pod(out, name_len);
  out.write(cfg.backbone.data(), name_len);
  write_pod(out, static_cast<std::int32_t>(cfg.head_units));
  write_pod(out, static_cast<std::int32_t>(cfg.head_layers));
  write_pod(out, cfg.dropout);
  write_pod(out, static_cast<std::int32_t>(cfg.num_outputs));
  write_pod(out, static_cast<std::uint8_t>(cfg.include_specials ? 1 : 0));
  write_pod(out, static_cast<std::uint64_t>(model.param_count()));
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.param_count() * sizeof(float)));
  if (!out) throw ModelError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ModelError("not a checkpoint file: " + path.string());
  }
  Checkpoint ck;
  read_pod(in, ck.taxonomy_checksum);
  std::uint32_t name_len = 0;
  read_pod(in, name_len);
  if (!in || name_len > 256) throw ModelError("corrupt checkpoint: " + path.string());
  ck.config.backbone.resize(name_len);
  in.read(ck.config.backbone.data(), name_len);
  std::int32_t head_units = 0, head_layers = 0, num_outputs = 0;
  std::uint8_t include_specials = 1;
  std::uint64_t n_params = 0;
  read_pod(in, head_units);
  read_pod(in, head_layers);
  read_pod(in, ck.config.dropout);
  read_pod(in, num_outputs);
  read_pod(in, include_specials);
  read_pod(in, n_params);
  if (!in || n_params > (1ull << 32)) throw ModelError("corrupt checkpoint: " + path.string());
  ck.config.head_units = head_units;
  ck.config.head_layers = head_layers;
  ck.config.num_outputs = num_outputs;
  ck.config.include_specials = include_specials != 0;
  std::vector<float> params(n_params);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(n_params * sizeof(float)));
  if (!in) throw ModelError("truncated checkpoint: " + path.string());
  ck.model = rebuild_model(ck.config, std::move(params));
  return ck;
}

void save_history(const std::vector<EpochStats>& history, int best_epoch,
                  const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,lr,train_loss,val_loss,val_metric,is_best\n";
  char buf[160];
  for (const EpochStats& s : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%d\n", s.epoch, s.lr, s.train_loss,
                  s.val_loss, s.val_metric, s.epoch == best_epoch ? 1 : 0);
    out << buf;
  }
  write_file(path, out.str());
}

}  // namespace hierax
