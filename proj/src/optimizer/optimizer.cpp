#include <cmath>

#include "lopt/optimizer.hpp"
#include "lopt/random.hpp"

namespace lopt {

using ad::Var;

namespace {

constexpr double kLambdaFloor = 1e-16;
constexpr double kNormFloor = 1e-300;

// Row [e_0, e_1, ...] of decay exponents: a_s = sigmoid(beta)^e_s.
NdArray exponent_row(int count, double first) {
  NdArray row(Shape{1, count});
  double e = first;
  for (int s = 0; s < count; ++s) {
    row[static_cast<std::size_t>(s)] = e;
    e *= 0.5;
  }
  return row;
}

// N x count decay factors exp(e_s * log sigmoid(beta)).
Var decay(const Var& beta, int count, double first) {
  ad::Tape& tape = *beta.tape();
  const Var log_sig = -softplus(-beta);
  return exp(matmul(log_sig, tape.constant(exponent_row(count, first))));
}

Var row_mean(const Var& a) {
  const Shape& s = a.shape();
  return sum_to(a, Shape{s[0], 1}) * (1.0 / static_cast<double>(s[1]));
}

Var column_mean(const Var& a) {
  const Shape& s = a.shape();
  return sum_to(a, Shape{1, s[1]}) * (1.0 / static_cast<double>(s[0]));
}

Var as_column(const Var& a) {
  const Shape target{a.shape().numel(), 1};
  return a.shape() == target ? a : reshape(a, target);
}

Var as_shape(const Var& a, const Shape& shape) { return a.shape() == shape ? a : reshape(a, shape); }

NdArray hidden_init(const NdArray& init, std::int64_t rows, bool trainable_init) {
  const std::int64_t k = init.shape()[1];
  NdArray out(Shape{rows, k});
  if (!trainable_init) return out;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < k; ++c) out.at(r, c) = init[static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace

DivergenceError::DivergenceError(std::int64_t step, double loss)
    : std::runtime_error("optimizer diverged at step " + std::to_string(step) + " (loss " + std::to_string(loss) + ")"),
      step_(step),
      loss_(loss) {}

OptimizerState init_state(const MetaParams& meta, std::span<const NdArray> theta0, const InitOptions& options) {
  const FeatureFlags& f = meta.arch.flags;
  const int s = f.active_timescales();
  const int lambda_cols = f.prev_timescale ? s + 1 : s;

  Rng rng(derive_seed(options.seed, {0x1e7a}));
  const double lr = options.init_lr ? *options.init_lr : log_uniform(rng, 1e-6, 1e-2);
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("initial learning rate must be positive");
  const double log_lr = std::log(lr);

  OptimizerState state;
  state.seed = options.seed;
  if (f.param_noise) state.noise_scale = log_uniform(rng, 1e-10, 1e-2);

  for (const NdArray& p : theta0) {
    const std::int64_t n = p.shape().numel();
    if (n == 0) throw std::invalid_argument("empty parameter tensor");
    TensorSlot<NdArray> slot;
    slot.theta = NdArray(Shape{n, 1}, p.buffer());
    slot.phi = slot.theta;
    slot.h_param = hidden_init(meta[kInitHParam], n, f.trainable_init);
    slot.gbar = NdArray(Shape{n, s});
    slot.lambda = NdArray(Shape{n, lambda_cols}, 1.0);
    slot.eta = NdArray(Shape{n, 1}, log_lr);
    slot.eta_bar = slot.eta;
    slot.beta_g = NdArray(Shape{n, 1});
    slot.beta_lambda = NdArray(Shape{n, 1});
    slot.h_tensor = f.trainable_init ? meta[kInitHTensor] : NdArray(meta[kInitHTensor].shape());
    state.tensors.push_back(std::move(slot));
    state.shapes.push_back(p.shape());
  }
  state.h_global = f.trainable_init ? meta[kInitHGlobal] : NdArray(meta[kInitHGlobal].shape());
  return state;
}

TapeState to_tape(ad::Tape& tape, const OptimizerState& state) {
  TapeState out;
  out.shapes = state.shapes;
  out.step = state.step;
  out.noise_scale = state.noise_scale;
  out.seed = state.seed;
  out.h_global = tape.constant(state.h_global);
  for (const auto& t : state.tensors) {
    TensorSlot<Var> v;
    v.theta = tape.constant(t.theta);
    v.phi = tape.constant(t.phi);
    v.h_param = tape.constant(t.h_param);
    v.gbar = tape.constant(t.gbar);
    v.lambda = tape.constant(t.lambda);
    v.eta = tape.constant(t.eta);
    v.eta_bar = tape.constant(t.eta_bar);
    v.beta_g = tape.constant(t.beta_g);
    v.beta_lambda = tape.constant(t.beta_lambda);
    v.h_tensor = tape.constant(t.h_tensor);
    out.tensors.push_back(std::move(v));
  }
  return out;
}

OptimizerState to_values(const TapeState& state) {
  OptimizerState out;
  out.shapes = state.shapes;
  out.step = state.step;
  out.noise_scale = state.noise_scale;
  out.seed = state.seed;
  out.h_global = state.h_global.value();
  for (const auto& t : state.tensors) {
    TensorSlot<NdArray> v;
    v.theta = t.theta.value();
    v.phi = t.phi.value();
    v.h_param = t.h_param.value();
    v.gbar = t.gbar.value();
    v.lambda = t.lambda.value();
    v.eta = t.eta.value();
    v.eta_bar = t.eta_bar.value();
    v.beta_g = t.beta_g.value();
    v.beta_lambda = t.beta_lambda.value();
    v.h_tensor = t.h_tensor.value();
    out.tensors.push_back(std::move(v));
  }
  return out;
}

std::vector<Var> meta_on_tape(ad::Tape& tape, const MetaParams& meta, bool trainable) {
  std::vector<Var> out;
  out.reserve(meta.arrays.size());
  for (const NdArray& a : meta.arrays) out.push_back(trainable ? tape.variable(a) : tape.constant(a));
  return out;
}

void bind_initial_hidden(const Architecture& arch, std::span<const Var> meta, TapeState& state) {
  if (!arch.flags.trainable_init) return;
  for (auto& t : state.tensors) {
    t.h_param = broadcast_to(meta[kInitHParam], Shape{t.theta.shape()[0], arch.k_param});
    t.h_tensor = meta[kInitHTensor];
  }
  state.h_global = meta[kInitHGlobal];
}

std::vector<NdArray> current_params(const OptimizerState& state) {
  std::vector<NdArray> out;
  for (std::size_t i = 0; i < state.tensors.size(); ++i) {
    out.emplace_back(state.shapes[i], state.tensors[i].theta.buffer());
  }
  return out;
}

std::vector<Var> current_params(const TapeState& state) {
  std::vector<Var> out;
  for (std::size_t i = 0; i < state.tensors.size(); ++i) out.push_back(as_shape(state.tensors[i].theta, state.shapes[i]));
  return out;
}

Averages update_moving_averages(const FeatureFlags& flags, const Var& gbar, const Var& lambda, const Var& g,
                                const Var& beta_g, const Var& beta_lambda, bool first_step) {
  ad::Tape& tape = *g.tape();
  const int s = flags.active_timescales();
  const std::int64_t n = g.shape()[0];

  const Var a = decay(beta_g, s, 1.0);
  Averages out;
  out.gbar = gbar * a + g * (1.0 - a);

  if (!flags.dynamic_input_scaling) {
    out.lambda = lambda;
    out.m = out.gbar;
    out.gamma = tape.constant(NdArray(Shape{n, s}));
    return out;
  }

  // With the previous-timescale variant column 0 tracks g itself at twice the
  // shortest decay exponent, and scaled average s divides by column s.
  const Var src = flags.prev_timescale ? concat(g, out.gbar, 1) : out.gbar;
  const Var sq = square(src);
  if (first_step) {
    out.lambda = sq;
  } else {
    const Var b = decay(beta_lambda, flags.prev_timescale ? s + 1 : s, flags.prev_timescale ? 2.0 : 1.0);
    out.lambda = lambda * b + sq * (1.0 - b);
  }
  const Var scale = flags.prev_timescale ? slice(out.lambda, 1, 0, s) : out.lambda;
  const Var own = flags.prev_timescale ? slice(out.lambda, 1, 1, s + 1) : out.lambda;
  out.m = out.gbar / sqrt(clamp_min(scale, kLambdaFloor));
  const Var log_lambda = log(clamp_min(own, kLambdaFloor));
  out.gamma = log_lambda - row_mean(log_lambda);
  return out;
}

Var gru_cell(const Var& x, const Var& h, const Var& w_x, const Var& w_h_rz, const Var& w_h_h, const Var& bias) {
  const std::int64_t k = h.shape()[1];
  const Var px = matmul(x, w_x) + bias;
  const Var ph = matmul(h, w_h_rz);
  const Var r = sigmoid(slice(px, 1, 0, k) + slice(ph, 1, 0, k));
  const Var z = sigmoid(slice(px, 1, k, 2 * k) + slice(ph, 1, k, 2 * k));
  const Var cand = tanh(slice(px, 1, 2 * k, 3 * k) + matmul(r * h, w_h_h));
  return cand + z * (h - cand);
}

StepOutputs hierarchical_step(const Architecture& arch, std::span<const Var> meta, const TapeState& state,
                              std::span<const Var> x, std::span<const Var> m) {
  ad::Tape& tape = *state.h_global.tape();
  const FeatureFlags& f = arch.flags;
  const std::size_t count = state.tensors.size();

  NdArray mask(Shape{1, kNumOutputs}, 1.0);
  mask[kDirTheta] = 0.0;
  mask[kDirPhi] = 0.0;
  const Var readout_b = meta[kReadoutB] * tape.constant(mask);
  Var shortcut;
  if (f.shortcut) {
    const std::int64_t s = meta[kShortcutP].shape()[0];
    shortcut = concat(meta[kShortcutP], tape.constant(NdArray(Shape{s, kNumOutputs - 2})), 1);
  }

  const Var global_to_param = matmul(state.h_global, meta[kParamFromGlobal]);
  const Var tensor_bias = meta[kTensorB] + matmul(state.h_global, meta[kTensorFromGlobal]);

  StepOutputs out;
  Var global_in;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = state.tensors[i];
    const Var bias = meta[kParamB] + matmul(t.h_tensor, meta[kParamFromTensor]) + global_to_param;
    const Var hp = gru_cell(x[i], t.h_param, meta[kParamWx], meta[kParamWhRz], meta[kParamWhH], bias);
    const Var ht = gru_cell(column_mean(hp), t.h_tensor, meta[kTensorWx], meta[kTensorWhRz], meta[kTensorWhH],
                            tensor_bias);
    Var y = matmul(hp, meta[kReadoutW]) + readout_b;
    if (f.shortcut) y = y + matmul(m[i], shortcut);
    out.y.push_back(y);
    out.h_param.push_back(hp);
    out.h_tensor.push_back(ht);
    global_in = i == 0 ? ht : global_in + ht;
  }
  if (count > 1) global_in = global_in * (1.0 / static_cast<double>(count));
  out.h_global =
      gru_cell(global_in, state.h_global, meta[kGlobalWx], meta[kGlobalWhRz], meta[kGlobalWhH], meta[kGlobalB]);
  return out;
}

Var optimizer_step(ad::Tape& tape, const Architecture& arch, std::span<const Var> meta, TapeState& state,
                   const Problem& problem, const Batch* batch, const StepOptions& options) {
  const FeatureFlags& f = arch.flags;
  const std::size_t count = state.tensors.size();
  if (meta.size() != kNumMetaArrays) throw std::invalid_argument("meta-parameter count mismatch");

  std::vector<Var> theta_p;
  std::vector<Var> phi_p;
  for (std::size_t i = 0; i < count; ++i) {
    theta_p.push_back(as_shape(state.tensors[i].theta, state.shapes[i]));
    phi_p.push_back(f.attention ? as_shape(state.tensors[i].phi, state.shapes[i]) : theta_p.back());
  }
  const bool separate = f.attention && options.loss_at_theta;
  const Var loss_phi = problem.loss(tape, phi_p, batch);
  if (!std::isfinite(loss_phi.item())) throw DivergenceError(state.step, loss_phi.item());
  const Var loss_theta = separate ? problem.loss(tape, theta_p, batch) : loss_phi;
  if (!std::isfinite(loss_theta.item())) throw DivergenceError(state.step, loss_theta.item());

  std::vector<Var> grads = ad::gradient(loss_phi, phi_p, options.create_graph);
  if (batch != nullptr && problem.stochastic()) grads = problem.transform_gradient(tape, std::move(grads), *batch);
  apply_gradients(tape, arch, meta, state, grads);
  return loss_theta;
}

void apply_gradients(ad::Tape& tape, const Architecture& arch, std::span<const Var> meta, TapeState& state,
                     std::span<const Var> grads) {
  const FeatureFlags& f = arch.flags;
  const std::size_t count = state.tensors.size();
  if (grads.size() != count) throw std::invalid_argument("gradient count mismatch");

  // Mean log learning rate over every scalar parameter.
  Var eta_sum;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const Var s = sum(state.tensors[i].eta);
    eta_sum = i == 0 ? s : eta_sum + s;
    total += state.tensors[i].eta.shape()[0];
  }
  const Var eta_mean = eta_sum * (1.0 / static_cast<double>(total));

  std::vector<Averages> avgs;
  std::vector<Var> x;
  std::vector<Var> m;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = state.tensors[i];
    const Var g = as_column(grads[i]);
    avgs.push_back(update_moving_averages(f, t.gbar, t.lambda, g, t.beta_g, t.beta_lambda, state.step == 0));
    const Var rel = f.relative_lr ? t.eta - eta_mean : tape.constant(NdArray(t.eta.shape()));
    x.push_back(concat(concat(avgs.back().m, avgs.back().gamma, 1), rel, 1));
    m.push_back(avgs.back().m);
  }

  const StepOutputs out = hierarchical_step(arch, meta, state, x, m);
  const Var gamma = sigmoid(meta[kGammaLogit]);
  const Var eta_gain = 1.0 / gamma;
  const Var bar_gain = (1.0 - gamma) / gamma;

  for (std::size_t i = 0; i < count; ++i) {
    auto& t = state.tensors[i];
    const Var& y = out.y[i];
    const double n = static_cast<double>(t.theta.shape()[0]);
    const Var d_theta = slice(y, 1, kDirTheta, kDirTheta + 1);
    const Var d_phi = slice(y, 1, kDirPhi, kDirPhi + 1);
    const Var delta_eta = slice(y, 1, kDeltaEta, kDeltaEta + 1);

    Var step_theta;
    Var step_phi;
    if (f.unnormalized_step) {
      const Var lr = exp(t.eta);
      step_theta = lr * d_theta;
      step_phi = lr * d_phi;
    } else {
      step_theta = exp(t.eta) * (d_theta * (n / sqrt(clamp_min(sum(square(d_theta)), kNormFloor))));
      const Var lr_phi = exp(mean(t.eta) + meta[kAttendOffset]);
      step_phi = d_phi * (lr_phi * n / sqrt(clamp_min(sum(square(d_phi)), kNormFloor)));
    }

    Var theta_next = t.theta + step_theta;
    if (f.param_noise && state.noise_scale > 0.0) {
      Rng rng(derive_seed(state.seed, {0x9015e, static_cast<std::uint64_t>(state.step), i}));
      theta_next = theta_next + tape.constant(normal_array(t.theta.shape(), rng, state.noise_scale));
    }
    t.phi = f.attention ? t.theta + step_phi : theta_next;
    t.theta = theta_next;
    t.eta = t.eta_bar + delta_eta * eta_gain;
    t.eta_bar = t.eta_bar + delta_eta * bar_gain;
    t.gbar = avgs[i].gbar;
    t.lambda = avgs[i].lambda;
    t.beta_g = slice(y, 1, kBetaG, kBetaG + 1);
    t.beta_lambda = slice(y, 1, kBetaLambda, kBetaLambda + 1);
    t.h_param = out.h_param[i];
    t.h_tensor = out.h_tensor[i];
  }
  state.h_global = out.h_global;
  ++state.step;
}

double LearnedOptimizer::step(const Problem& problem, const Batch* batch) {
  ad::Tape tape;
  const std::vector<Var> meta = meta_on_tape(tape, meta_, false);
  TapeState s = to_tape(tape, state_);
  const double loss = optimizer_step(tape, meta_.arch, meta, s, problem, batch, {.loss_at_theta = false}).item();
  state_ = to_values(s);
  return loss;
}

}  // namespace lopt
