#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "curvseg/imagecore.hpp"

namespace curvseg {

/// Shape of the desk-scale network: three 3x3 conv layers (the second with
/// stride 2) followed by two 1x1 heads.
struct Architecture {
  std::size_t in_channels = 1;
  std::size_t channels = 16;
  std::size_t embedding_dim = 3;

  /// Spatial reduction between input and head outputs.
  static constexpr std::size_t kDownsample = 2;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class Slot : std::size_t {
  kConv1Weight,
  kConv1Bias,
  kConv2Weight,
  kConv2Bias,
  kConv3Weight,
  kConv3Bias,
  kSegWeight,
  kSegBias,
  kEmbWeight,
  kEmbBias,
};
inline constexpr std::size_t kSlotCount = 10;

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

/// All network weights in one flat buffer. Gradients use the same layout.
class ModelParams {
 public:
  ModelParams() : ModelParams(Architecture{}) {}
  /// All-zero parameters.
  explicit ModelParams(const Architecture& arch);

  /// Uniform fan-in scaled initialization.
  static ModelParams initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  const std::array<TensorInfo, kSlotCount>& layout() const { return layout_; }
  const TensorInfo& info(Slot s) const { return layout_[static_cast<std::size_t>(s)]; }

  std::span<double> tensor(Slot s) {
    const auto& i = info(s);
    return {values_.data() + i.offset, i.size};
  }
  std::span<const double> tensor(Slot s) const {
    const auto& i = info(s);
    return {values_.data() + i.offset, i.size};
  }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  Architecture arch_;
  std::array<TensorInfo, kSlotCount> layout_;
  std::vector<double> values_;
};

struct LossConfig {
  double delta_v = 0.5;
  double delta_d = 3.0;
  double w_var = 1.0;
  double w_dist = 1.0;
  double w_dice = 0.3;
  double w_disc = 1.0;
  double dice_smooth = 1.0;

  void validate() const;
};

struct OptimConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 60;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct NetworkOutput {
  ImageGrid seg_prob;        // (H/2) x (W/2), values in (0,1)
  EmbeddingField embedding;  // (H/2) x (W/2) x embedding_dim
};

/// Throws std::invalid_argument when the image dims are odd.
NetworkOutput forward(const ModelParams& params, const ImageGrid& image);

/// Smoothed Dice loss 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
double dice_loss(const ImageGrid& prob, const Mask& target, double smooth = 1.0);
/// d(dice_loss)/d(prob).
ImageGrid dice_loss_grad(const ImageGrid& prob, const Mask& target, double smooth = 1.0);

struct DiscriminativeResult {
  double loss = 0.0;
  double variance_term = 0.0;
  double distance_term = 0.0;
  /// d(loss)/d(embedding) for every pixel; zero on background.
  EmbeddingField grad;
};

/// w_var * L_var + w_dist * L_dist over the foreground ids (> 0) present in
/// `labels`. No foreground yields loss 0 and a zero gradient.
DiscriminativeResult discriminative_loss(const EmbeddingField& embedding, const LabelMap& labels,
                                         const LossConfig& cfg);

/// Head-resolution training targets.
struct Targets {
  Mask segmentation;
  LabelMap instances;
};

/// 2x2 block majority: a head pixel is foreground when at least two of its four
/// input pixels are; its id is the most frequent foreground id (ties to the lowest).
Targets downsample_targets(const LabelMap& full_res, std::size_t factor);

struct LossAndGrad {
  double loss = 0.0;
  double dice = 0.0;
  double discriminative = 0.0;
  ModelParams grad;
};

/// w_dice * dice + w_disc * discriminative, with exact backpropagation through
/// both heads and the trunk. Targets must be at head resolution.
LossAndGrad total_loss_and_grad(const ModelParams& params, const ImageGrid& image,
                                const Mask& seg_target, const LabelMap& instance_labels,
                                const LossConfig& cfg, bool need_grad = true);

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Decoupled weight decay Adam update. Throws NumericError on non-finite gradients.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const OptimConfig& cfg);

struct TrainSample {
  ImageGrid image;
  InstanceSet instances;
};

struct TrainConfig {
  Architecture arch;
  LossConfig loss;
  OptimConfig optim;
  AugmentParams augment;
  bool use_augmentation = true;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> log;
  /// Epoch whose parameters were returned; 0 means the initialization.
  std::size_t best_epoch = 0;
};

/// Parameters `train` starts from.
ModelParams initial_params(const TrainConfig& cfg);

/// Mean loss of `params` over `samples` without augmentation.
double evaluate_loss(const ModelParams& params, const std::vector<TrainSample>& samples,
                     const LossConfig& cfg, std::uint64_t label_seed);

/// Minibatch AdamW training; returns the parameters of the epoch with the lowest
/// validation loss. Throws NumericError on divergence.
TrainResult train(const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
                  const TrainConfig& cfg);

}  // namespace curvseg
