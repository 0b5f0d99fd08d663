/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hierax/dataset.hpp"
#include "hierax/imaging.hpp"
#include "hierax/prediction.hpp"
#include "hierax/taxonomy.hpp"
#include "hierax/util.hpp"

namespace hierax {

struct ModelError : HieraxError {
  using HieraxError::HieraxError;
};

enum class SelectionMetric { mean_auc, exact_match_accuracy };

struct ModelConfig {
  std::string backbone = "toy-cnn";
  int head_units = 512;
  int head_layers = 2;
  float dropout = 0.2f;
  int num_outputs = 0;
  bool include_specials = true;

  void validate() const;  // throws ModelError
};

struct TrainConfig {
  int epochs = 50;
  double lr_start = 1e-3;
  double lr_end = 1e-6;
  int batch_size = 16;
  std::uint64_t seed = 0;
  SelectionMetric selection = SelectionMetric::mean_auc;

  void validate() const;
};

/// Log-linear schedule between lr_start (epoch 0) and lr_end (last epoch),
/// both endpoints exact. Throws on epoch outside [0, epochs).
double lr_at(int epoch, const TrainConfig& tc);

/// Mean over dimensions of -[t log p + (1-t) log(1-p)], predictions clipped
/// to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> pred, std::span<const double> target);
/// Gradient of bce_loss w.r.t. the (clipped) predictions.
std::vector<double> bce_loss_gradient(std::span<const double> pred,
                                      std::span<const double> target);

struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t count() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
};

/// Convolutional feature extractor: 299x299x1 input to a CxHxW feature map.
/// Parameters live in the owning model's flat vector; implementations are
/// stateless apart from their architecture so one instance can serve many
/// workspaces in parallel.
class Backbone {
 public:
  virtual ~Backbone() = default;

  struct Workspace {
    virtual ~Workspace() = default;
  };

  virtual std::string name() const = 0;
  virtual FeatureShape feature_shape() const = 0;
  virtual std::size_t param_count() const = 0;
  virtual void init_params(std::span<float> params, Rng& rng) const = 0;
  virtual std::unique_ptr<Workspace> make_workspace() const = 0;

  /// Returns the feature map (post-activation) held inside the workspace.
  virtual const float* forward(std::span<const float> input, std::span<const float> params,
                               Workspace& ws) const = 0;
  /// Accumulates parameter gradients for the given feature-map gradient.
  /// Requires a preceding forward on the same workspace.
  virtual void backward(std::span<const float> grad_features, std::span<const float> params,
                        Workspace& ws, std::span<float> grad_params) const = 0;
};

/// Factory for the named backbone; "toy-cnn" is the built-in small stack of
/// strided convolutions. Throws ModelError on unknown names (the large
/// pretrained topologies plug in through the Backbone interface).
std::unique_ptr<Backbone> make_backbone(const std::string& name);

/// Multi-label classifier: backbone -> global average pooling ->
/// [dense(head_units) + ReLU + dropout] x head_layers -> dense(num_outputs)
/// -> sigmoid.
class Model {
 public:
  Model() = default;
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  static Model build(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<float> params() { return params_; }
  std::span<const float> params() const { return params_; }
  FeatureShape feature_shape() const { return backbone_->feature_shape(); }

  /// Offset/size of the final classification layer inside params().
  std::pair<std::size_t, std::size_t> output_layer_range() const;

  /// Per-invocation scratch state; one per concurrent forward/backward.
  struct Workspace {
    std::unique_ptr<Backbone::Workspace> backbone;
    std::vector<float> gap;
    std::vector<std::vector<float>> act;        // post-ReLU, pre-dropout per head layer
    std::vector<std::vector<float>> hidden;     // layer inputs after dropout
    std::vector<std::vector<float>> drop_mask;  // 0 or 1/(1-p); valid when trained
    bool trained_forward = false;
    std::vector<float> logits;
    std::vector<float> probs;
    std::vector<float> grad_h, grad_z, grad_features;
    const float* features = nullptr;
  };
  std::unique_ptr<Workspace> make_workspace() const;

  /// Runs the network; returns sigmoid probabilities (valid until the next
  /// forward on the same workspace). Passing a dropout RNG enables training
  /// mode; prediction runs without one.
  std::span<const float> forward(const ModelInput& input, Workspace& ws,
                                 Rng* dropout_rng = nullptr) const;
  std::span<const float> logits(const Workspace& ws) const;
  const float* features(const Workspace& ws) const;

  /// Backprop from dLoss/dlogits; accumulates into `grad` (param_count).
  void backward(std::span<const float> grad_logits, Workspace& ws, std::span<float> grad) const;

  /// d(logit of output_index)/d(feature map), through the head only; for
  /// attention maps. Returns a buffer inside the workspace.
  const float* grad_wrt_features(int output_index, Workspace& ws) const;

  ~Model();

 private:
  ModelConfig cfg_;
  std::unique_ptr<Backbone> backbone_;
  std::vector<float> params_;
  // Flat-parameter offsets for the head; see model.cpp.
  std::vector<std::size_t> offsets_;

  friend Model rebuild_model(const ModelConfig& cfg, std::vector<float> params);
};

/// Reassembles a model from a checkpoint's config and weights.
Model rebuild_model(const ModelConfig& cfg, std::vector<float> params);

// --- training -----------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  Model model;  // checkpoint with the best validation metric
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

/// Loads, orients and preprocesses one manifest image; failures carry the
/// image id.
ModelInput load_model_input(const Manifest& m, const ImageRecord& rec,
                            const PreprocessOptions& pre = {});

/// Adam over per-epoch mean binary cross entropy with the lr_at schedule.
/// Fully seeded: weight init, shuffling and dropout all derive from
/// tc.seed, and results are independent of the worker count. Throws
/// ModelError on an empty training set and aborts on non-finite loss.
TrainResult train(const Taxonomy& t, const Manifest& manifest,
                  const std::vector<const ImageRecord*>& train_records,
                  const std::vector<const ImageRecord*>& val_records, Model model,
                  const TrainConfig& tc, const PreprocessOptions& pre = {},
                  const std::function<void(const EpochStats&)>& on_epoch = nullptr);

/// Deterministic batch prediction in record order, dropout disabled.
PredictionMatrix predict(const Model& model, const Taxonomy& t, const Manifest& manifest,
                         const std::vector<const ImageRecord*>& records,
                         const PreprocessOptions& pre = {});

// --- checkpoints ----------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  std::uint64_t taxonomy_checksum = 0;
  Model model;
};

void save_checkpoint(const Model& model, std::uint64_t taxonomy_checksum,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_history(const std::vector<EpochStats>& history, int best_epoch,
                  const std::filesystem::path& path);

}  // namespace hierax
