#include <cmath>

#include "lopt/optimizer.hpp"
#include "lopt/random.hpp"

namespace lopt {

namespace {

enum FlagBit : std::uint32_t {
  kAttention = 1u << 0,
  kMultiTimescale = 1u << 1,
  kDynamicInputScaling = 1u << 2,
  kRelativeLr = 1u << 3,
  kShortcut = 1u << 4,
  kTrainableInit = 1u << 5,
  kParamNoise = 1u << 6,
  kPrevTimescale = 1u << 7,
  kUnnormalizedStep = 1u << 8,
};

}  // namespace

std::uint32_t FeatureFlags::bits() const {
  std::uint32_t b = 0;
  if (attention) b |= kAttention;
  if (multi_timescale) b |= kMultiTimescale;
  if (dynamic_input_scaling) b |= kDynamicInputScaling;
  if (relative_lr) b |= kRelativeLr;
  if (shortcut) b |= kShortcut;
  if (trainable_init) b |= kTrainableInit;
  if (param_noise) b |= kParamNoise;
  if (prev_timescale) b |= kPrevTimescale;
  if (unnormalized_step) b |= kUnnormalizedStep;
  return b;
}

FeatureFlags FeatureFlags::from_bits(std::uint32_t b, int timescales) {
  FeatureFlags f;
  f.attention = b & kAttention;
  f.multi_timescale = b & kMultiTimescale;
  f.dynamic_input_scaling = b & kDynamicInputScaling;
  f.relative_lr = b & kRelativeLr;
  f.shortcut = b & kShortcut;
  f.trainable_init = b & kTrainableInit;
  f.param_noise = b & kParamNoise;
  f.prev_timescale = b & kPrevTimescale;
  f.unnormalized_step = b & kUnnormalizedStep;
  f.timescales = timescales;
  return f;
}

const std::vector<std::string>& MetaParams::names() {
  static const std::vector<std::string> kNames = {
      "param_rnn.w_x",        "param_rnn.w_h_rz",  "param_rnn.w_h_h",  "param_rnn.b",
      "param_rnn.from_tensor", "param_rnn.from_global", "tensor_rnn.w_x", "tensor_rnn.w_h_rz",
      "tensor_rnn.w_h_h",     "tensor_rnn.b",      "tensor_rnn.from_global", "global_rnn.w_x",
      "global_rnn.w_h_rz",    "global_rnn.w_h_h",  "global_rnn.b",     "readout.w",
      "readout.b",            "shortcut.p",        "init.h_param",     "init.h_tensor",
      "init.h_global",        "gamma_logit",       "attend_offset",
  };
  return kNames;
}

std::vector<Shape> MetaParams::shapes(const Architecture& arch) {
  const std::int64_t kp = arch.k_param;
  const std::int64_t kt = arch.k_tensor;
  const std::int64_t kg = arch.k_global;
  const std::int64_t in = arch.input_width();
  const std::int64_t s = arch.flags.active_timescales();
  return {
      Shape{in, 3 * kp}, Shape{kp, 2 * kp}, Shape{kp, kp}, Shape{1, 3 * kp}, Shape{kt, 3 * kp}, Shape{kg, 3 * kp},
      Shape{kp, 3 * kt}, Shape{kt, 2 * kt}, Shape{kt, kt}, Shape{1, 3 * kt}, Shape{kg, 3 * kt},
      Shape{kt, 3 * kg}, Shape{kg, 2 * kg}, Shape{kg, kg}, Shape{1, 3 * kg},
      Shape{kp, kNumOutputs}, Shape{1, kNumOutputs}, Shape{s, 2},
      Shape{1, kp}, Shape{1, kt}, Shape{1, kg},
      Shape{}, Shape{},
  };
}

MetaParams MetaParams::initialize(const Architecture& arch, std::uint64_t seed) {
  if (arch.flags.timescales < 1) throw std::invalid_argument("at least one timescale required");
  if (arch.k_param < 1 || arch.k_tensor < 1 || arch.k_global < 1) {
    throw std::invalid_argument("hidden sizes must be positive");
  }
  MetaParams m;
  m.arch = arch;
  const auto shapes = MetaParams::shapes(arch);
  Rng rng(derive_seed(seed, {0x3e7a}));
  for (std::size_t i = 0; i < kNumMetaArrays; ++i) {
    const Shape& s = shapes[i];
    switch (i) {
      case kParamWx:
      case kParamWhRz:
      case kParamWhH:
      case kParamFromTensor:
      case kParamFromGlobal:
      case kTensorWx:
      case kTensorWhRz:
      case kTensorWhH:
      case kTensorFromGlobal:
      case kGlobalWx:
      case kGlobalWhRz:
      case kGlobalWhH:
        m.arrays.push_back(normal_array(s, rng, 0.1 / std::sqrt(static_cast<double>(s[0]))));
        break;
      case kShortcutP:
        m.arrays.emplace_back(s, -1.0 / static_cast<double>(s[0]));
        break;
      case kGammaLogit:
        m.arrays.push_back(NdArray::scalar(std::log(0.9 / 0.1)));
        break;
      default:
        m.arrays.emplace_back(s);
        break;
    }
  }
  return m;
}

void MetaParams::clamp() {
  NdArray& b = arrays[kReadoutB];
  b[kDirTheta] = 0.0;
  b[kDirPhi] = 0.0;
}

}  // namespace lopt
