#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ren/data.hpp"
#include "ren/geometry.hpp"
#include "ren/nn.hpp"
#include "ren/tensor.hpp"

namespace ren {

enum class LossKind { SmoothL1, L2 };

std::string to_string(LossKind loss);
LossKind parse_loss(std::string_view text);

struct TrainConfig {
  int batch_size = 128;
  double base_lr = 0.005;
  int lr_step_epochs = 20;
  double lr_factor = 0.1;
  int total_epochs = 80;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  LossKind loss = LossKind::SmoothL1;
  bool augment = true;
  AugmentRanges augment_ranges;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  /// Defaults overridden by `kv`; keys that are not training keys are ignored.
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  static bool is_key(std::string_view key);

  bool operator==(const TrainConfig&) const = default;
};

/// Smooth-L1 on one coordinate residual: 0.5 x^2 below 0.01, 0.01 (|x| - 0.005) above.
double smooth_l1_value(double x);
double smooth_l1_grad(double x);

/// Mean of smooth_l1_value(pred - target) over all elements. Throws
/// NumericError on NaN input.
template <class T>
Tensor<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target);

/// Mean of 0.5 (pred - target)^2 over all elements.
template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
Tensor<T> regression_loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target);

/// Momentum buffers keyed by parameter position and name.
template <class T>
struct OptimizerState {
  std::vector<std::string> names;
  std::vector<std::vector<T>> velocity;
  std::uint64_t step = 0;
  int epoch = 0;

  static OptimizerState for_model(const Model<T>& model);
};

/// v <- m v - lr (g + wd w); w <- w + v; then gradients are cleared.
/// Throws if any parameter has no gradient from a backward pass.
template <class T>
void sgd_step(Model<T>& model, OptimizerState<T>& state, double lr, const TrainConfig& cfg);

/// base_lr * lr_factor^floor(epoch / lr_step_epochs).
double lr_at(int epoch, const TrainConfig& cfg);

struct LossRecord {
  int epoch = 0;
  int batch = 0;
  double lr = 0;
  double loss = 0;

  bool operator==(const LossRecord&) const = default;
};

std::string format_loss_csv(const std::vector<LossRecord>& history);

struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_batch;
  std::function<void(int epoch)> on_epoch_end;
};

/// Per-frame crop centers from depth segmentation.
std::vector<Vec3> frame_centers(const Dataset& dataset, double near_mm, double far_mm);

/// Network input and normalized labels for one frame under one augmentation.
PatchSample make_training_sample(const Dataset& dataset, std::size_t index, const Vec3& center, int input_size,
                                 const AugmentParams& aug);

/// Seeded shuffle, augmentation, forward, loss, backward and SGD for
/// cfg.total_epochs. Returns one record per mini-batch.
template <class T>
std::vector<LossRecord> train(Model<T>& model, const Dataset& dataset, const TrainConfig& cfg,
                              const TrainCallbacks& callbacks = {});

}  // namespace ren
