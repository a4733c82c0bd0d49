#include "ren/train.hpp"

#include <cmath>
#include <sstream>

#include "ren/error.hpp"
#include "ren/text.hpp"

namespace ren {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0x4147;
constexpr std::uint64_t kDropoutStream = 0x4450;

template <class T>
void require_same(const Tensor<T>& pred, const Tensor<T>& target, const char* op) {
  if (!pred.defined() || !target.defined()) throw ShapeError(std::string(op) + ": undefined input");
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  if (pred.numel() == 0) throw ShapeError(std::string(op) + ": empty input");
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (std::isnan(pred.values()[i]) || std::isnan(target.values()[i])) {
      throw NumericError(std::string(op) + ": NaN at element " + std::to_string(i));
    }
  }
}

template <class T, class Value, class Grad>
Tensor<T> pointwise_loss(const char* op, const Tensor<T>& pred, const Tensor<T>& target, Value value, Grad grad) {
  require_same(pred, target, op);
  const std::size_t n = pred.numel();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += value(static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]));
  }
  Tensor<T> result = Tensor<T>::make_result(op, {}, {static_cast<T>(total / n)}, {&pred, &target});
  if (result.requires_grad()) {
    auto* out = result.node();
    auto* p = pred.node();
    auto* t = target.node();
    result.node()->backward_fn = [=]() {
      const T g = out->grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = static_cast<T>(grad(static_cast<double>(p->values[i]) - static_cast<double>(t->values[i])));
        if (p->requires_grad) p->grad[i] += g * d;
        if (t->requires_grad) t->grad[i] -= g * d;
      }
    };
  }
  return result;
}

void check_positive(bool ok, const char* what) {
  if (!ok) throw InputError(std::string("train config: ") + what);
}

}  // namespace

std::string to_string(LossKind loss) { return loss == LossKind::SmoothL1 ? "smooth-l1" : "l2"; }

LossKind parse_loss(std::string_view text) {
  if (text == "smooth-l1") return LossKind::SmoothL1;
  if (text == "l2") return LossKind::L2;
  throw InputError("unknown loss '" + std::string(text) + "' (expected smooth-l1 or l2)");
}

void TrainConfig::validate() const {
  check_positive(batch_size >= 1, "batch_size must be >= 1");
  check_positive(base_lr >= 0 && std::isfinite(base_lr), "base_lr must be finite and >= 0");
  check_positive(lr_step_epochs >= 1, "lr_step_epochs must be >= 1");
  check_positive(lr_factor > 0 && lr_factor < 1, "lr_factor must be in (0, 1)");
  check_positive(total_epochs >= 1, "epochs must be >= 1");
  check_positive(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  check_positive(weight_decay >= 0 && std::isfinite(weight_decay), "weight_decay must be finite and >= 0");
  augment_ranges.validate();
}

namespace {
const char* const kTrainKeys[] = {"batch_size",    "base_lr",       "lr_step_epochs", "lr_factor", "epochs",
                                  "momentum",      "weight_decay",  "loss",           "augment",   "aug_translate",
                                  "aug_scale_min", "aug_scale_max", "aug_rotate",     "aug_flip",  "seed"};
}

bool TrainConfig::is_key(std::string_view key) {
  for (const char* k : kTrainKeys) {
    if (key == k) return true;
  }
  return false;
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  using text::format_double;
  return {{"batch_size", std::to_string(batch_size)},
          {"base_lr", format_double(base_lr)},
          {"lr_step_epochs", std::to_string(lr_step_epochs)},
          {"lr_factor", format_double(lr_factor)},
          {"epochs", std::to_string(total_epochs)},
          {"momentum", format_double(momentum)},
          {"weight_decay", format_double(weight_decay)},
          {"loss", to_string(loss)},
          {"augment", augment ? "true" : "false"},
          {"aug_translate", format_double(augment_ranges.translate_px)},
          {"aug_scale_min", format_double(augment_ranges.scale_min)},
          {"aug_scale_max", format_double(augment_ranges.scale_max)},
          {"aug_rotate", format_double(augment_ranges.rotate_deg)},
          {"aug_flip", format_double(augment_ranges.flip_probability)},
          {"seed", std::to_string(seed)}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (!is_key(k)) throw InputError("unknown training key '" + k + "'");
  }
  TrainConfig c;
  const auto get = [&kv](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("batch_size")) c.batch_size = static_cast<int>(text::parse_int(*v, "batch_size"));
  if (auto v = get("base_lr")) c.base_lr = text::parse_double(*v, "base_lr");
  if (auto v = get("lr_step_epochs")) c.lr_step_epochs = static_cast<int>(text::parse_int(*v, "lr_step_epochs"));
  if (auto v = get("lr_factor")) c.lr_factor = text::parse_double(*v, "lr_factor");
  if (auto v = get("epochs")) c.total_epochs = static_cast<int>(text::parse_int(*v, "epochs"));
  if (auto v = get("momentum")) c.momentum = text::parse_double(*v, "momentum");
  if (auto v = get("weight_decay")) c.weight_decay = text::parse_double(*v, "weight_decay");
  if (auto v = get("loss")) c.loss = parse_loss(*v);
  if (auto v = get("augment")) c.augment = text::parse_bool(*v, "augment");
  if (auto v = get("aug_translate")) c.augment_ranges.translate_px = text::parse_double(*v, "aug_translate");
  if (auto v = get("aug_scale_min")) c.augment_ranges.scale_min = text::parse_double(*v, "aug_scale_min");
  if (auto v = get("aug_scale_max")) c.augment_ranges.scale_max = text::parse_double(*v, "aug_scale_max");
  if (auto v = get("aug_rotate")) c.augment_ranges.rotate_deg = text::parse_double(*v, "aug_rotate");
  if (auto v = get("aug_flip")) c.augment_ranges.flip_probability = text::parse_double(*v, "aug_flip");
  if (auto v = get("seed")) {
    const long long s = text::parse_int(*v, "seed");
    if (s < 0) throw InputError("seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  c.validate();
  return c;
}

double smooth_l1_value(double x) {
  const double a = std::abs(x);
  return a < 0.01 ? 0.5 * x * x : 0.01 * (a - 0.005);
}

double smooth_l1_grad(double x) {
  if (std::abs(x) < 0.01) return x;
  return x > 0 ? 0.01 : -0.01;
}

template <class T>
Tensor<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target) {
  return pointwise_loss("smooth_l1", pred, target, smooth_l1_value, smooth_l1_grad);
}

template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return pointwise_loss(
      "l2_loss", pred, target, [](double x) { return 0.5 * x * x; }, [](double x) { return x; });
}

template <class T>
Tensor<T> regression_loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target) {
  return kind == LossKind::SmoothL1 ? smooth_l1(pred, target) : l2_loss(pred, target);
}

template <class T>
OptimizerState<T> OptimizerState<T>::for_model(const Model<T>& model) {
  OptimizerState s;
  for (const auto& p : model.parameters()) {
    s.names.push_back(p.name);
    s.velocity.emplace_back(p.tensor.numel(), T(0));
  }
  return s;
}

template <class T>
void sgd_step(Model<T>& model, OptimizerState<T>& state, double lr, const TrainConfig& cfg) {
  auto& params = model.parameters();
  if (params.size() != state.velocity.size() || params.size() != state.names.size()) {
    throw InputError("optimizer state has " + std::to_string(state.velocity.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != state.names[i] || params[i].tensor.numel() != state.velocity[i].size()) {
      throw InputError("optimizer state does not match parameter '" + params[i].name + "'");
    }
    if (!params[i].tensor.requires_grad() || !params[i].tensor.grad_populated()) {
      throw NumericError("sgd_step: parameter '" + params[i].name + "' has no gradient; run backward first");
    }
  }
  const T m = static_cast<T>(cfg.momentum);
  const T rate = static_cast<T>(lr);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_values();
    auto g = params[i].tensor.mutable_grad();
    auto& v = state.velocity[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = m * v[k] - rate * (g[k] + wd * w[k]);
      w[k] = w[k] + v[k];
    }
    params[i].tensor.zero_grad();
  }
  ++state.step;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs) {
    throw InputError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs) +
                     ")");
  }
  double lr = cfg.base_lr;
  for (int k = 0; k < epoch / cfg.lr_step_epochs; ++k) lr *= cfg.lr_factor;
  return lr;
}

std::string format_loss_csv(const std::vector<LossRecord>& history) {
  std::string out = "epoch,batch,lr,loss\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.batch) + "," + text::format_double(r.lr) + "," +
           text::format_double(r.loss) + "\n";
  }
  return out;
}

std::vector<Vec3> frame_centers(const Dataset& dataset, double near_mm, double far_mm) {
  std::vector<Vec3> centers(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      centers[i] = segment_and_center(dataset.frames[i], near_mm, far_mm);
    } catch (const NoForegroundError& e) {
      throw NoForegroundError("frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return centers;
}

PatchSample make_training_sample(const Dataset& dataset, std::size_t index, const Vec3& center, int input_size,
                                 const AugmentParams& aug) {
  PatchSample s = crop_patch(dataset.frames[index], center, dataset.config.extent, input_size, aug);
  s.labels = transform_labels(normalize_labels(dataset.poses[index], center, dataset.config.extent), aug, input_size,
                              dataset.config.mirror);
  return s;
}

template <class T>
std::vector<LossRecord> train(Model<T>& model, const Dataset& dataset, const TrainConfig& cfg,
                              const TrainCallbacks& callbacks) {
  cfg.validate();
  if (dataset.size() == 0) throw InputError("train: dataset is empty");
  const ModelConfig& mc = model.config();
  if (dataset.config.joints != mc.joints) {
    throw InputError("train: dataset has " + std::to_string(dataset.config.joints) + " joints, model expects " +
                     std::to_string(mc.joints));
  }
  const int size = mc.input_size;
  const std::size_t pixels = static_cast<std::size_t>(size) * size;
  const std::size_t outputs = static_cast<std::size_t>(mc.output_dim());
  const std::size_t n = dataset.size();
  const std::vector<Vec3> centers = frame_centers(dataset, dataset.config.near_mm, dataset.config.far_mm);

  // Without augmentation every epoch sees the same patches.
  std::vector<PatchSample> cached;
  if (!cfg.augment) {
    cached.resize(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      cached[i] = make_training_sample(dataset, static_cast<std::size_t>(i), centers[i], size, {});
    }
  }

  const RngStream shuffle_root = RngStream(cfg.seed).fork(kShuffleStream);
  const RngStream augment_root = RngStream(cfg.seed).fork(kAugmentStream);
  const RngStream dropout_root = RngStream(cfg.seed).fork(kDropoutStream);
  OptimizerState<T> state = OptimizerState<T>::for_model(model);
  model.set_mode(Mode::Train);
  std::vector<LossRecord> history;

  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    RngStream shuffle_rng = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
    const RngStream epoch_aug = augment_root.fork(static_cast<std::uint64_t>(epoch));
    int batch = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n - start);
      std::vector<T> input(count * pixels);
      std::vector<T> target(count * outputs);
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(count); ++b) {
        const std::size_t idx = order[start + static_cast<std::size_t>(b)];
        PatchSample local;
        const PatchSample* s = nullptr;
        if (cfg.augment) {
          RngStream rng = epoch_aug.fork(idx);
          local = make_training_sample(dataset, idx, centers[idx], size, draw_augmentation(rng, cfg.augment_ranges));
          s = &local;
        } else {
          s = &cached[idx];
        }
        std::copy(s->patch.begin(), s->patch.end(), input.begin() + static_cast<std::ptrdiff_t>(b * pixels));
        for (std::size_t k = 0; k < outputs; ++k) target[b * outputs + k] = static_cast<T>(s->labels[k]);
      }
      const Tensor<T> x = Tensor<T>::from({count, 1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)},
                                          std::move(input));
      const Tensor<T> y = Tensor<T>::from({count, outputs}, std::move(target));
      RngStream dropout_rng =
          dropout_root.fork(mix_seed(static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch)));
      const auto fail = [&](const std::string& reason) {
        std::ostringstream msg;
        msg << reason << " at epoch " << epoch << ", batch " << batch << ", lr " << text::format_double(lr);
        return NumericError(msg.str());
      };
      Tensor<T> loss;
      try {
        loss = regression_loss(cfg.loss, model.forward(x, dropout_rng), y);
      } catch (const NumericError& e) {
        throw fail(std::string("non-finite loss (") + e.what() + ")");
      }
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw fail("non-finite loss " + std::to_string(value));
      backward(loss);
      sgd_step(model, state, lr, cfg);
      history.push_back({epoch, batch, lr, value});
      if (callbacks.on_batch) callbacks.on_batch(history.back());
    }
    state.epoch = epoch + 1;
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch);
  }
  model.set_mode(Mode::Eval);
  return history;
}

#define REN_INSTANTIATE_TRAIN(T)                                                                               \
  template Tensor<T> smooth_l1<T>(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> l2_loss<T>(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> regression_loss<T>(LossKind, const Tensor<T>&, const Tensor<T>&);                          \
  template struct OptimizerState<T>;                                                                            \
  template void sgd_step<T>(Model<T>&, OptimizerState<T>&, double, const TrainConfig&);                         \
  template std::vector<LossRecord> train<T>(Model<T>&, const Dataset&, const TrainConfig&, const TrainCallbacks&);

REN_INSTANTIATE_TRAIN(float)
REN_INSTANTIATE_TRAIN(double)

}  // namespace ren
