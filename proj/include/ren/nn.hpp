#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ren/rng.hpp"
#include "ren/tensor.hpp"

namespace ren {

enum class Architecture { Shallow, Basic, BasicResidual };
enum class HeadKind { Single, RegionEnsemble, RegionBagging };
enum class Mode { Train, Eval };

std::string to_string(Architecture a);
std::string to_string(HeadKind h);
Architecture parse_architecture(std::string_view text);
HeadKind parse_head(std::string_view text);

/// Sub-window of the final feature map feeding one regression branch.
struct Region {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  bool operator==(const Region&) const = default;
};

/// Ordered list of feature-map windows, one branch per window.
///
/// Presets are defined for any square feature map of side F (12 for the
/// 96-pixel input): `nine6` (default), `four6`, `nine4`, `nine8`,
/// `multiscale` and `full`. Windows in the nine-anchor presets sit at offsets
/// {0, (F-s)/2, F-s} per axis for window side s.
struct RegionSpec {
  std::vector<Region> regions;

  /// Accepts a preset name or an explicit list "row:col:h:w;row:col:h:w;...".
  static RegionSpec parse(std::string_view text, int feature_size);
  static RegionSpec preset(std::string_view name, int feature_size);
  static bool is_preset(std::string_view name);

  /// Throws ShapeError unless every window lies inside a feature_size map.
  void validate(int feature_size) const;
  std::string describe() const;
};

struct ModelConfig {
  Architecture architecture = Architecture::BasicResidual;
  HeadKind head = HeadKind::RegionEnsemble;
  std::string regions = "nine6";
  int joints = 16;
  int fc_width = 2048;
  double dropout_rate = 0.5;
  std::array<int, 3> channels{16, 32, 64};
  int input_size = 96;

  /// Side of the final feature map (three 2x2 pools).
  int feature_size() const { return input_size / 8; }
  int output_dim() const { return 3 * joints; }
  /// Regions actually used by the head; `single` always means one full-map window.
  RegionSpec region_spec() const;
  void validate() const;

  /// Flat "key = value" lines; the inverse of parse_model_config.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

/// One layer of the feature extractor's main path, enough to compute
/// receptive fields.
struct LayerDesc {
  enum class Kind { Conv, Pool };
  Kind kind = Kind::Conv;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
};

/// Main path (skips excluded) of the extractor for an architecture.
std::vector<LayerDesc> feature_stack(Architecture architecture);

struct ParamShape {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  bool is_bias = false;
  /// Final regression layer (fusion or per-branch output).
  bool is_output = false;
};

/// Standard deviation of the final regression weights at initialization, so
/// that initial predictions sit near the crop center.
inline constexpr double kOutputInitStd = 0.001;

/// Every trainable tensor the config implies, in creation order.
std::vector<ParamShape> param_shapes(const ModelConfig& config);
std::size_t param_count(const ModelConfig& config);

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::vector<NamedParameter<T>> params);

  const ModelConfig& config() const noexcept { return config_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  const std::vector<NamedParameter<T>>& parameters() const noexcept { return params_; }
  std::vector<NamedParameter<T>>& parameters() noexcept { return params_; }
  const Tensor<T>& parameter(std::string_view name) const;
  Tensor<T>& parameter(std::string_view name);
  std::size_t parameter_count() const;

  /// batch x 1 x S x S  ->  batch x c3 x S/8 x S/8.
  Tensor<T> forward_features(const Tensor<T>& input) const;
  /// Features -> batch x 3J. Dropout draws from `rng` in train mode only.
  Tensor<T> forward_head(const Tensor<T>& features, RngStream& rng) const;
  Tensor<T> forward(const Tensor<T>& input, RngStream& rng) const;

  /// Per-branch activations after the second FC block, for inspection.
  std::vector<Tensor<T>> branch_features(const Tensor<T>& features, RngStream& rng) const;

 private:
  Tensor<T> conv_relu(const Tensor<T>& x, const std::string& layer) const;
  Tensor<T> branch(const Tensor<T>& features, std::size_t index, const Region& region, RngStream& rng) const;

  ModelConfig config_;
  RegionSpec regions_;
  Mode mode_ = Mode::Train;
  std::vector<NamedParameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// He-normal weights (std = sqrt(2 / fan_in)), small output-layer weights
/// and zero biases.
template <class T>
Model<T> build_model(const ModelConfig& config, RngStream& rng);

/// Same config and parameter values in another precision.
template <class To, class From>
Model<To> convert_model(const Model<From>& model);

}  // namespace ren
