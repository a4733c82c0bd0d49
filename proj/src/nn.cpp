#include "ren/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ren/text.hpp"

namespace ren {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Shallow: return "shallow";
    case Architecture::Basic: return "basic";
    case Architecture::BasicResidual: return "basic-residual";
  }
  return "?";
}

std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::Single: return "single";
    case HeadKind::RegionEnsemble: return "region-ensemble";
    case HeadKind::RegionBagging: return "region-bagging";
  }
  return "?";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "shallow") return Architecture::Shallow;
  if (text == "basic") return Architecture::Basic;
  if (text == "basic-residual") return Architecture::BasicResidual;
  throw InputError("unknown architecture '" + std::string(text) + "' (shallow | basic | basic-residual)");
}

HeadKind parse_head(std::string_view text) {
  if (text == "single") return HeadKind::Single;
  if (text == "region-ensemble") return HeadKind::RegionEnsemble;
  if (text == "region-bagging") return HeadKind::RegionBagging;
  throw InputError("unknown head '" + std::string(text) + "' (single | region-ensemble | region-bagging)");
}

// RegionSpec -----------------------------------------------------------------

namespace {

std::vector<Region> nine_anchor(int f, int s) {
  const int m = (f - s) / 2;
  const int e = f - s;
  // corners, edge centers, center
  return {{0, 0, s, s}, {0, e, s, s}, {e, 0, s, s}, {e, e, s, s},
          {0, m, s, s}, {m, 0, s, s}, {m, e, s, s}, {e, m, s, s}, {m, m, s, s}};
}

}  // namespace

bool RegionSpec::is_preset(std::string_view name) {
  return name == "nine6" || name == "four6" || name == "nine4" || name == "nine8" || name == "multiscale" ||
         name == "full";
}

RegionSpec RegionSpec::preset(std::string_view name, int f) {
  if (f < 1) throw ShapeError("feature map side must be >= 1");
  const auto side = [f](int num, int den) { return std::max(1, (f * num + den / 2) / den); };
  RegionSpec spec;
  if (name == "nine6") {
    spec.regions = nine_anchor(f, side(1, 2));
  } else if (name == "four6") {
    const int s = side(1, 2);
    spec.regions = {{0, 0, s, s}, {0, f - s, s, s}, {f - s, 0, s, s}, {f - s, f - s, s, s}};
  } else if (name == "nine4") {
    spec.regions = nine_anchor(f, side(1, 3));
  } else if (name == "nine8") {
    spec.regions = nine_anchor(f, side(2, 3));
  } else if (name == "multiscale") {
    for (int s : {f, side(2, 3), side(1, 3)}) spec.regions.push_back({(f - s) / 2, (f - s) / 2, s, s});
  } else if (name == "full") {
    spec.regions = {{0, 0, f, f}};
  } else {
    throw InputError("unknown region preset '" + std::string(name) + "'");
  }
  return spec;
}

RegionSpec RegionSpec::parse(std::string_view text, int feature_size) {
  text = text::trim(text);
  if (is_preset(text)) return preset(text, feature_size);
  RegionSpec spec;
  for (const auto& item : text::split(text, ';')) {
    if (item.empty()) continue;
    const auto parts = text::split(item, ':');
    if (parts.size() != 4) throw InputError("region '" + item + "' must be row:col:height:width");
    spec.regions.push_back({static_cast<int>(text::parse_int(parts[0], "region row")),
                            static_cast<int>(text::parse_int(parts[1], "region col")),
                            static_cast<int>(text::parse_int(parts[2], "region height")),
                            static_cast<int>(text::parse_int(parts[3], "region width"))});
  }
  return spec;
}

void RegionSpec::validate(int f) const {
  if (regions.empty()) throw ShapeError("region spec is empty");
  for (const auto& r : regions) {
    if (r.row < 0 || r.col < 0 || r.height < 1 || r.width < 1 || r.row + r.height > f || r.col + r.width > f) {
      throw ShapeError("region " + std::to_string(r.row) + ":" + std::to_string(r.col) + ":" +
                       std::to_string(r.height) + ":" + std::to_string(r.width) + " lies outside the " +
                       std::to_string(f) + "x" + std::to_string(f) + " feature map");
    }
  }
}

std::string RegionSpec::describe() const {
  std::string out;
  for (const auto& r : regions) {
    if (!out.empty()) out += ';';
    out += std::to_string(r.row) + ":" + std::to_string(r.col) + ":" + std::to_string(r.height) + ":" +
           std::to_string(r.width);
  }
  return out;
}

// ModelConfig ----------------------------------------------------------------

RegionSpec ModelConfig::region_spec() const {
  if (head == HeadKind::Single) return RegionSpec::preset("full", feature_size());
  return RegionSpec::parse(regions, feature_size());
}

void ModelConfig::validate() const {
  if (joints < 1) throw InputError("joints must be >= 1");
  if (fc_width < 1) throw InputError("fc_width must be > 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InputError("dropout must be in [0, 1)");
  for (int c : channels) {
    if (c < 1) throw InputError("stage channels must be >= 1");
  }
  if (input_size < 8 || input_size % 8 != 0) {
    throw InputError("input_size must be a positive multiple of 8, got " + std::to_string(input_size));
  }
  region_spec().validate(feature_size());
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"architecture", to_string(architecture)},
          {"head", to_string(head)},
          {"regions", regions},
          {"joints", std::to_string(joints)},
          {"fc_width", std::to_string(fc_width)},
          {"dropout", text::format_double(dropout_rate)},
          {"channels", std::to_string(channels[0]) + "," + std::to_string(channels[1]) + "," +
                           std::to_string(channels[2])},
          {"input_size", std::to_string(input_size)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "architecture") {
      c.architecture = parse_architecture(v);
    } else if (k == "head") {
      c.head = parse_head(v);
    } else if (k == "regions") {
      c.regions = v;
    } else if (k == "joints") {
      c.joints = static_cast<int>(text::parse_int(v, k));
    } else if (k == "fc_width") {
      c.fc_width = static_cast<int>(text::parse_int(v, k));
    } else if (k == "dropout") {
      c.dropout_rate = text::parse_double(v, k);
    } else if (k == "channels") {
      const auto parts = text::split(v, ',');
      if (parts.size() != 3) throw InputError("channels must be three comma-separated integers");
      for (int i = 0; i < 3; ++i) c.channels[i] = static_cast<int>(text::parse_int(parts[i], "channels"));
    } else if (k == "input_size") {
      c.input_size = static_cast<int>(text::parse_int(v, k));
    } else {
      throw InputError("unknown model config key '" + k + "'");
    }
  }
  return c;
}

// Layer stacks ---------------------------------------------------------------

std::vector<LayerDesc> feature_stack(Architecture architecture) {
  const LayerDesc conv{LayerDesc::Kind::Conv, 3, 1, 1};
  const LayerDesc pool{LayerDesc::Kind::Pool, 2, 2, 0};
  if (architecture == Architecture::Shallow) return {conv, pool, conv, pool, conv, pool};
  return {conv, conv, pool, conv, conv, pool, conv, conv, pool};
}

std::vector<ParamShape> param_shapes(const ModelConfig& config) {
  config.validate();
  std::vector<ParamShape> out;
  const auto conv = [&out](const std::string& name, int in, int outc, int k) {
    const std::size_t fan_in = static_cast<std::size_t>(in) * k * k;
    out.push_back({name + ".weight", {static_cast<std::size_t>(outc), static_cast<std::size_t>(in),
                                      static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                   fan_in, false});
    out.push_back({name + ".bias", {static_cast<std::size_t>(outc)}, fan_in, true});
  };
  const auto fc = [&out](const std::string& name, std::size_t in, std::size_t outd, bool output = false) {
    out.push_back({name + ".weight", {outd, in}, in, false, output});
    out.push_back({name + ".bias", {outd}, in, true, output});
  };
  const auto [c1, c2, c3] = config.channels;
  if (config.architecture == Architecture::Shallow) {
    conv("features.conv1", 1, c1, 3);
    conv("features.conv2", c1, c2, 3);
    conv("features.conv3", c2, c3, 3);
  } else {
    conv("features.conv1", 1, c1, 3);
    conv("features.conv2", c1, c1, 3);
    conv("features.conv3", c1, c2, 3);
    conv("features.conv4", c2, c2, 3);
    conv("features.conv5", c2, c3, 3);
    conv("features.conv6", c3, c3, 3);
    if (config.architecture == Architecture::BasicResidual) {
      conv("features.skip1", c1, c2, 1);
      conv("features.skip2", c2, c3, 1);
    }
  }
  const RegionSpec spec = config.region_spec();
  const std::size_t width = static_cast<std::size_t>(config.fc_width);
  const std::size_t out_dim = static_cast<std::size_t>(config.output_dim());
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const auto& reg = spec.regions[r];
    const std::string prefix = "head.branch" + std::to_string(r);
    fc(prefix + ".fc1", static_cast<std::size_t>(c3) * reg.height * reg.width, width);
    fc(prefix + ".fc2", width, width);
    if (config.head == HeadKind::RegionBagging) fc(prefix + ".out", width, out_dim, true);
  }
  if (config.head != HeadKind::RegionBagging) fc("head.fusion", width * spec.regions.size(), out_dim, true);
  return out;
}

std::size_t param_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& p : param_shapes(config)) total += shape_numel(p.shape);
  return total;
}

// Model ----------------------------------------------------------------------

template <class T>
Model<T>::Model(ModelConfig config, std::vector<NamedParameter<T>> params)
    : config_(std::move(config)), regions_(config_.region_spec()), params_(std::move(params)) {
  config_.validate();
  const auto expected = param_shapes(config_);
  if (expected.size() != params_.size()) {
    throw ShapeError("model expects " + std::to_string(expected.size()) + " parameter tensors, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != expected[i].name || params_[i].tensor.shape() != expected[i].shape) {
      throw ShapeError("parameter " + std::to_string(i) + " should be " + expected[i].name + " " +
                       shape_str(expected[i].shape) + ", got " + params_[i].name + " " +
                       shape_str(params_[i].tensor.shape()));
    }
    index_.emplace(params_[i].name, i);
  }
}

template <class T>
const Tensor<T>& Model<T>::parameter(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InputError("no parameter named '" + std::string(name) + "'");
  return params_[it->second].tensor;
}

template <class T>
Tensor<T>& Model<T>::parameter(std::string_view name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InputError("no parameter named '" + std::string(name) + "'");
  return params_[it->second].tensor;
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

template <class T>
Tensor<T> Model<T>::conv_relu(const Tensor<T>& x, const std::string& layer) const {
  return relu(conv2d(x, parameter(layer + ".weight"), parameter(layer + ".bias"), 1, 1));
}

template <class T>
Tensor<T> Model<T>::forward_features(const Tensor<T>& input) const {
  const auto s = static_cast<std::size_t>(config_.input_size);
  if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != s || input.dim(3) != s) {
    throw ShapeError("model input must be batch x 1 x " + std::to_string(s) + " x " + std::to_string(s) + ", got " +
                     shape_str(input.shape()));
  }
  if (config_.architecture == Architecture::Shallow) {
    Tensor<T> x = maxpool2d(conv_relu(input, "features.conv1"), 2, 2);
    x = maxpool2d(conv_relu(x, "features.conv2"), 2, 2);
    return maxpool2d(conv_relu(x, "features.conv3"), 2, 2);
  }
  const bool residual = config_.architecture == Architecture::BasicResidual;
  Tensor<T> x = maxpool2d(conv_relu(conv_relu(input, "features.conv1"), "features.conv2"), 2, 2);
  Tensor<T> main = conv_relu(conv_relu(x, "features.conv3"), "features.conv4");
  if (residual) {
    main = add(main, conv2d(x, parameter("features.skip1.weight"), parameter("features.skip1.bias"), 1, 0));
  }
  x = maxpool2d(main, 2, 2);
  main = conv_relu(conv_relu(x, "features.conv5"), "features.conv6");
  if (residual) {
    main = add(main, conv2d(x, parameter("features.skip2.weight"), parameter("features.skip2.bias"), 1, 0));
  }
  return maxpool2d(main, 2, 2);
}

template <class T>
Tensor<T> Model<T>::branch(const Tensor<T>& features, std::size_t index, const Region& region, RngStream& rng) const {
  const std::string prefix = "head.branch" + std::to_string(index);
  const bool training = mode_ == Mode::Train;
  Tensor<T> x = slice_region(features, region.row, region.col, region.height, region.width);
  x = relu(linear(x, parameter(prefix + ".fc1.weight"), parameter(prefix + ".fc1.bias")));
  x = dropout(x, config_.dropout_rate, training, rng);
  x = relu(linear(x, parameter(prefix + ".fc2.weight"), parameter(prefix + ".fc2.bias")));
  return dropout(x, config_.dropout_rate, training, rng);
}

template <class T>
std::vector<Tensor<T>> Model<T>::branch_features(const Tensor<T>& features, RngStream& rng) const {
  const auto f = static_cast<std::size_t>(config_.feature_size());
  const auto c3 = static_cast<std::size_t>(config_.channels[2]);
  if (features.rank() != 4 || features.dim(1) != c3 || features.dim(2) != f || features.dim(3) != f) {
    throw ShapeError("head expects batch x " + std::to_string(c3) + " x " + std::to_string(f) + " x " +
                     std::to_string(f) + " features, got " + shape_str(features.shape()));
  }
  std::vector<Tensor<T>> out;
  out.reserve(regions_.regions.size());
  for (std::size_t r = 0; r < regions_.regions.size(); ++r) out.push_back(branch(features, r, regions_.regions[r], rng));
  return out;
}

template <class T>
Tensor<T> Model<T>::forward_head(const Tensor<T>& features, RngStream& rng) const {
  std::vector<Tensor<T>> branches = branch_features(features, rng);
  if (config_.head == HeadKind::RegionBagging) {
    for (std::size_t r = 0; r < branches.size(); ++r) {
      const std::string prefix = "head.branch" + std::to_string(r);
      branches[r] = linear(branches[r], parameter(prefix + ".out.weight"), parameter(prefix + ".out.bias"));
    }
    return average(branches);
  }
  return linear(concat(branches, 1), parameter("head.fusion.weight"), parameter("head.fusion.bias"));
}

template <class T>
Tensor<T> Model<T>::forward(const Tensor<T>& input, RngStream& rng) const {
  return forward_head(forward_features(input), rng);
}

template <class T>
Model<T> build_model(const ModelConfig& config, RngStream& rng) {
  std::vector<NamedParameter<T>> params;
  for (const auto& p : param_shapes(config)) {
    std::vector<T> values(shape_numel(p.shape), T(0));
    if (!p.is_bias) {
      const double stddev = p.is_output ? kOutputInitStd : std::sqrt(2.0 / static_cast<double>(p.fan_in));
      for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
    }
    params.push_back({p.name, Tensor<T>::from(p.shape, std::move(values), true)});
  }
  return Model<T>(config, std::move(params));
}

template <class To, class From>
Model<To> convert_model(const Model<From>& model) {
  std::vector<NamedParameter<To>> params;
  for (const auto& p : model.parameters()) {
    std::vector<To> values(p.tensor.values().begin(), p.tensor.values().end());
    params.push_back({p.name, Tensor<To>::from(p.tensor.shape(), std::move(values), true)});
  }
  Model<To> out(model.config(), std::move(params));
  out.set_mode(model.mode());
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelConfig&, RngStream&);
template Model<double> build_model<double>(const ModelConfig&, RngStream&);
template Model<double> convert_model<double, float>(const Model<float>&);
template Model<float> convert_model<float, double>(const Model<double>&);
template Model<float> convert_model<float, float>(const Model<float>&);
template Model<double> convert_model<double, double>(const Model<double>&);

}  // namespace ren
