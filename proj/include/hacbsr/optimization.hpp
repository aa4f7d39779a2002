#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hacbsr/degradation.hpp"
#include "hacbsr/kernel_sampling.hpp"
#include "hacbsr/nn/adam.hpp"
#include "hacbsr/nn/encoder.hpp"
#include "hacbsr/nn/kernel_generator.hpp"
#include "hacbsr/nn/unet.hpp"

namespace hacbsr {

struct TrainConfig {
  int outer_iters = 300;
  int inner_iters = 5;
  double lr_image = 0.005;
  double lr_kernel_kl = 0.5;
  double lr_kernel_meta = 0.5;
  double theta_h = 0.4;
  int scale = 2;
  int kl_batch = 5;
  double alpha_min = 0.8;
  double alpha_max = 0.99;
  double loss_min = 1e-6;
  double loss_max = 1e-2;
  std::uint64_t seed = 0;

  int history_update_period = 10;
  int history_capacity = 20;
  int n_proposals = 16;
  Index kernel_size = 0;  // 0 selects 4 * scale + 3
  double sigma_max_factor = 2.5;
  double sigma_lo = 0.7;
  double rho_limit = 0.8;

  int image_warmup = 100;
  int kernel_warmup = 200;

  Index unet_width = 32;
  Index unet_scales = 3;
  Index kernel_noise_dim = 64;
  Index kernel_hidden = 1000;
  std::string encoder = "linear-random";
  Index feature_dim = 512;

  // Ablations: -CK replaces contrastive selection by single random proposals,
  // -CL drops the history term and EMA updates.
  bool contrastive_sampling = true;
  bool history_contrast = true;

  double divergence_limit = 1e6;
  int snapshot_period = 10;

  Index resolved_kernel_size() const { return kernel_size > 0 ? kernel_size : default_kernel_size(scale); }
  double effective_theta() const { return history_contrast ? theta_h : 0.0; }

  SamplingConfig sampling() const {
    SamplingConfig c;
    c.kernel_size = resolved_kernel_size();
    c.sigma_range = {sigma_lo, sigma_max_factor * scale};
    c.rho_range = {-rho_limit, rho_limit};
    c.n_proposals = contrastive_sampling ? n_proposals : 1;
    return c;
  }

  void validate() const {
    if (outer_iters < 1 || inner_iters < 1 || kl_batch < 1) throw ArgumentError("N, P and T must be at least 1");
    if (!(lr_image > 0) || !(lr_kernel_kl > 0) || !(lr_kernel_meta > 0))
      throw ArgumentError("learning rates must be positive");
    if (!(theta_h >= 0)) throw ArgumentError("theta_h must be nonnegative");
    if (!(alpha_min < alpha_max)) throw ArgumentError("alpha_min must be below alpha_max");
    if (!(loss_min < loss_max)) throw ArgumentError("loss_min must be below loss_max");
    if (scale < 2 || scale > 4) throw ArgumentError("scale must be 2, 3 or 4");
    if (history_update_period < 1 || history_capacity < 1 || n_proposals < 1)
      throw ArgumentError("history period, capacity and proposal count must be positive");
    if (image_warmup < 0 || kernel_warmup < 0) throw ArgumentError("warmup step counts must be nonnegative");
    if (!(sigma_lo > 0) || sigma_max_factor * scale < sigma_lo || !(rho_limit >= 0 && rho_limit < 1))
      throw ArgumentError("kernel sampling ranges are invalid");
    if (resolved_kernel_size() % 2 == 0) throw ArgumentError("kernel size must be odd");
    if (feature_dim < 1) throw ArgumentError("feature_dim must be positive");
  }
};

inline double adaptive_alpha(double loss, const TrainConfig& cfg) {
  const double l = std::clamp(loss, cfg.loss_min, cfg.loss_max);
  // lerp is exact at both ends and monotone in t.
  return std::lerp(cfg.alpha_max, cfg.alpha_min, (l - cfg.loss_min) / (cfg.loss_max - cfg.loss_min));
}

template <typename Scalar>
Vector<Scalar> adaptive_history_update(const Vector<Scalar>& history, const Vector<Scalar>& current, double alpha) {
  if (history.size() != current.size()) throw ShapeError("history and current parameters differ in size");
  const auto a = static_cast<Scalar>(alpha);
  return a * history + (Scalar(1) - a) * current;
}

struct MetaWeights {
  std::vector<double> pi;
  std::vector<double> omega;
  bool degenerate = false;
};

inline MetaWeights meta_weights(const std::vector<double>& core_losses) {
  if (core_losses.empty()) throw ArgumentError("meta_weights needs at least one loss");
  const double lo = *std::min_element(core_losses.begin(), core_losses.end());
  double denom = 0.0;
  for (double l : core_losses) denom += l - lo;
  MetaWeights w;
  const size_t n = core_losses.size();
  if (denom < 1e-12) {
    w.degenerate = true;
    w.pi.assign(n, 1.0 / static_cast<double>(n));
    w.omega.assign(n, 1.0);
    return w;
  }
  for (double l : core_losses) {
    const double p = (l - lo) / denom;
    w.pi.push_back(p);
    w.omega.push_back(-(1.0 - p) * (1.0 - p) * std::log(p + 1e-3));
  }
  return w;
}

struct CilTerms {
  double core = 0.0;      // data fidelity, mean over LR pixels
  double contrast = 0.0;  // feature distance to the history image, mean over feature dims
  double total = 0.0;     // core + theta * contrast
};

/// History-augmented loss for a generated image x against observation y.
/// The history image is a constant; when grad_x is given it receives dL/dx.
template <typename Scalar>
CilTerms cil_terms(const Image<Scalar>& x, const Image<Scalar>& x_history, const Kernel<Scalar>& k,
                           const Image<Scalar>& y, int scale, double theta,
                           const nn::FeatureEncoder<Scalar>* encoder, Image<Scalar>* grad_x = nullptr) {
  if (x.rows() != y.rows() * scale || x.cols() != y.cols() * scale)
    throw ShapeError("image and observation sizes are inconsistent with the scale");
  const Image<Scalar> r = y - degrade_noiseless(x, k, scale);
  const double m = static_cast<double>(r.size());
  CilTerms t;
  t.core = static_cast<double>(r.template cast<double>().squaredNorm()) / m;
  Vector<Scalar> feat_diff;
  if (theta > 0.0) {
    if (!encoder) throw ConfigurationError("a feature encoder is required when theta_h > 0");
    if (x_history.rows() != x.rows() || x_history.cols() != x.cols()) throw ShapeError("history image shape mismatch");
    feat_diff = encoder->encode(x) - encoder->encode(x_history);
    t.contrast = static_cast<double>(feat_diff.template cast<double>().squaredNorm()) /
                 static_cast<double>(encoder->feature_dim());
  }
  t.total = t.core + theta * t.contrast;
  if (grad_x) {
    *grad_x = degrade_adjoint(r, k, scale, x.rows(), x.cols()) * static_cast<Scalar>(-2.0 / m);
    if (theta > 0.0) {
      const auto c = static_cast<Scalar>(2.0 * theta / static_cast<double>(encoder->feature_dim()));
      *grad_x += encoder->backward(Vector<Scalar>(feat_diff * c), x.rows(), x.cols());
    }
  }
  return t;
}

template <typename Scalar>
struct TrainState {
  TrainState(nn::UNet<Scalar> net_, nn::KernelGenerator<Scalar> kgen_, size_t history_capacity, Rng sampler)
      : net(std::move(net_)), kgen(std::move(kgen_)), history(history_capacity), sampler_rng(sampler) {}

  nn::UNet<Scalar> net;
  nn::KernelGenerator<Scalar> kgen;
  std::unique_ptr<nn::FeatureEncoder<Scalar>> encoder;

  Vector<Scalar> phi_x;
  Vector<Scalar> phi_h;
  Vector<Scalar> phi_k;
  nn::Adam<Scalar> adam_x;
  nn::Adam<Scalar> adam_k;

  nn::Planes<Scalar> z_x;
  Vector<Scalar> z_k;
  Image<Scalar> x_history;

  KernelHistory history;
  Rng sampler_rng;

  Index sr_height = 0;
  Index sr_width = 0;
  long outer = 0;       // completed outer iterations
  long inner_step = 0;  // global count of image updates
  long kl_steps = 0;
  long meta_steps = 0;

  Image<Scalar> image() const { return net.forward(phi_x, z_x, sr_height, sr_width); }
  Image<Scalar> history_image() const { return net.forward(phi_h, z_x, sr_height, sr_width); }
  Kernel<Scalar> kernel() const { return kgen.kernel(phi_k, z_k); }
};

template <typename Scalar>
TrainState<Scalar> make_train_state(Index lr_height, Index lr_width, const TrainConfig& cfg) {
  cfg.validate();
  TrainState<Scalar> s(nn::UNet<Scalar>({1, cfg.unet_width, cfg.unet_scales}),
                       nn::KernelGenerator<Scalar>({cfg.resolved_kernel_size(), cfg.kernel_noise_dim, cfg.kernel_hidden}),
                       static_cast<size_t>(cfg.history_capacity), stream_rng(cfg.seed, 4));
  s.sr_height = lr_height * cfg.scale;
  s.sr_width = lr_width * cfg.scale;
  if (s.sr_height % s.net.divisor() != 0 || s.sr_width % s.net.divisor() != 0)
    throw ConfigurationError("SR size must be divisible by 2^(unet_scales-1)");
  Rng noise_rng = stream_rng(cfg.seed, 0);
  s.z_x = nn::make_image_noise<Scalar>(1, s.sr_height, s.sr_width, noise_rng);
  s.z_k = nn::make_kernel_noise<Scalar>(cfg.kernel_noise_dim, noise_rng);
  Rng init_rng = stream_rng(cfg.seed, 1);
  s.phi_x = s.net.init(init_rng);
  s.phi_k = s.kgen.init(init_rng);
  s.phi_h = s.phi_x;
  s.adam_x.reset(s.phi_x.size());
  s.adam_k.reset(s.phi_k.size());
  if (cfg.effective_theta() > 0.0)
    s.encoder = nn::make_encoder<Scalar>(cfg.encoder, cfg.feature_dim, s.sr_height * s.sr_width, cfg.seed + 2);
  s.x_history = s.history_image();
  return s;
}

inline void guard_loss(double value, const char* what, long iteration, double limit) {
  if (!std::isfinite(value) || value > limit)
    throw DivergenceError(std::string(what) + " diverged (value " + std::to_string(value) + ")", iteration);
}

/// L^KL = sum_t ||G_k - k_t||_F^2 and its parameter gradient.
template <typename Scalar>
double kl_loss(const TrainState<Scalar>& s, const std::vector<Kernel<Scalar>>& batch, Vector<Scalar>* grad) {
  typename nn::KernelGenerator<Scalar>::Tape tape;
  const Vector<Scalar> probs = s.kgen.forward(s.phi_k, s.z_k, grad ? &tape : nullptr);
  Vector<Scalar> dprobs = Vector<Scalar>::Zero(probs.size());
  double loss = 0.0;
  for (const auto& k : batch) {
    if (k.size() != s.kgen.config().kernel_size) throw ShapeError("batch kernel size does not match the generator");
    const Vector<Scalar> d = probs - vec(k.values());
    loss += static_cast<double>(d.template cast<double>().squaredNorm());
    dprobs += Scalar(2) * d;
  }
  if (grad) *grad = s.kgen.backward(s.phi_k, s.z_k, tape, dprobs);
  return loss;
}

template <typename Scalar>
double kl_step(TrainState<Scalar>& s, const std::vector<Kernel<Scalar>>& batch, const TrainConfig& cfg) {
  if (batch.empty()) throw ArgumentError("kl_step needs a nonempty batch");
  Vector<Scalar> grad;
  const double loss = kl_loss(s, batch, &grad);
  guard_loss(loss, "KL loss", s.outer, cfg.divergence_limit);
  s.adam_k.step(s.phi_k, grad, cfg.lr_kernel_kl);
  ++s.kl_steps;
  return loss;
}

/// Value of the CIL loss at the given image parameters, plus the parameter gradient when requested.
template <typename Scalar>
CilTerms cil_loss(const TrainState<Scalar>& s, const Vector<Scalar>& phi_x, const Kernel<Scalar>& k,
                          const Image<Scalar>& y, const TrainConfig& cfg, Vector<Scalar>* grad = nullptr,
                          Image<Scalar>* x_out = nullptr) {
  typename nn::UNet<Scalar>::Tape tape;
  Image<Scalar> x = s.net.forward(phi_x, s.z_x, s.sr_height, s.sr_width, grad ? &tape : nullptr);
  Image<Scalar> gx;
  const auto t = cil_terms(x, s.x_history, k, y, cfg.scale, cfg.effective_theta(), s.encoder.get(),
                           grad ? &gx : nullptr);
  if (grad) *grad = s.net.backward(phi_x, tape, gx);
  if (x_out) *x_out = std::move(x);
  return t;
}

template <typename Scalar>
struct InnerLoopResult {
  std::vector<double> cil;
  std::vector<double> core;
  std::vector<double> contrast;
  std::vector<double> alphas;  // one per EMA refresh in this loop
  std::vector<Image<Scalar>> images;
};

template <typename Scalar>
void refresh_history(TrainState<Scalar>& s, double core_loss, const TrainConfig& cfg, InnerLoopResult<Scalar>* out) {
  const double alpha = adaptive_alpha(core_loss, cfg);
  s.phi_h = adaptive_history_update(s.phi_h, s.phi_x, alpha);
  s.x_history = s.history_image();
  if (out) out->alphas.push_back(alpha);
}

template <typename Scalar>
InnerLoopResult<Scalar> cil_inner_loop(TrainState<Scalar>& s, const Kernel<Scalar>& k_cil, const Image<Scalar>& y,
                                       const TrainConfig& cfg) {
  InnerLoopResult<Scalar> out;
  for (int p = 0; p < cfg.inner_iters; ++p) {
    Vector<Scalar> grad;
    Image<Scalar> x;
    const auto t = cil_loss(s, s.phi_x, k_cil, y, cfg, &grad, &x);
    guard_loss(t.total, "CIL loss", s.outer, cfg.divergence_limit);
    s.adam_x.step(s.phi_x, grad, cfg.lr_image);
    ++s.inner_step;
    out.cil.push_back(t.total);
    out.core.push_back(t.core);
    out.contrast.push_back(t.contrast);
    out.images.push_back(std::move(x));
    if (cfg.history_contrast && s.inner_step % cfg.history_update_period == 0) refresh_history(s, t.core, cfg, &out);
  }
  return out;
}

/// L_Meta = (1/P) sum_p w_p L^CIL_p with each image x_p held fixed and k = G_k(phi_k).
/// The contrastive part does not depend on k, so it enters the value only.
template <typename Scalar>
double meta_loss(const TrainState<Scalar>& s, const Vector<Scalar>& phi_k, const std::vector<Image<Scalar>>& images,
                 const std::vector<double>& contrast, const std::vector<double>& omega, const Image<Scalar>& y,
                 const TrainConfig& cfg, Vector<Scalar>* grad = nullptr) {
  if (images.size() != omega.size() || contrast.size() != omega.size())
    throw ArgumentError("meta loss inputs must have equal lengths");
  typename nn::KernelGenerator<Scalar>::Tape tape;
  const Vector<Scalar> probs = s.kgen.forward(phi_k, s.z_k, grad ? &tape : nullptr);
  const Kernel<Scalar> k = s.kgen.as_kernel(probs);
  const Index ks = k.size();
  const double p_count = static_cast<double>(omega.size());
  const double theta = cfg.effective_theta();
  double loss = 0.0;
  Image<Scalar> gk = Image<Scalar>::Zero(ks, ks);
  for (size_t p = 0; p < omega.size(); ++p) {
    const Image<Scalar> r = y - degrade_noiseless(images[p], k, cfg.scale);
    const double m = static_cast<double>(r.size());
    const double core = static_cast<double>(r.template cast<double>().squaredNorm()) / m;
    loss += omega[p] * (core + theta * contrast[p]) / p_count;
    if (grad && omega[p] != 0.0)
      gk += kernel_gradient(images[p], r, cfg.scale, ks) * static_cast<Scalar>(-2.0 * omega[p] / (m * p_count));
  }
  if (grad) *grad = s.kgen.backward(phi_k, s.z_k, tape, vec(gk));
  return loss;
}

template <typename Scalar>
double meta_step(TrainState<Scalar>& s, const InnerLoopResult<Scalar>& inner, const std::vector<double>& omega,
                 const Image<Scalar>& y, const TrainConfig& cfg) {
  Vector<Scalar> grad;
  const double loss = meta_loss(s, s.phi_k, inner.images, inner.contrast, omega, y, cfg, &grad);
  guard_loss(loss, "meta loss", s.outer, cfg.divergence_limit);
  s.adam_k.step(s.phi_k, grad, cfg.lr_kernel_meta);
  ++s.meta_steps;
  return loss;
}

struct SelectionRecord {
  long iteration = 0;
  double j = 0.0;
  double s_avg = 0.0;
  double s_min = 0.0;
  double s_max = 0.0;
  CovarianceSpec spec;
};

struct IterationRecord {
  long iteration = 0;
  double kl_loss = 0.0;
  std::vector<double> core;
  std::vector<double> cil;
  std::vector<double> contrast;
  std::vector<double> alphas;
  std::vector<double> pi;
  std::vector<double> omega;
  double meta_loss = 0.0;
  std::vector<double> sampled_j;
};

struct KernelSnapshot {
  long iteration = 0;
  Image<double> values;
};

struct RunReport {
  TrainConfig config;
  std::vector<double> image_warmup_losses;
  std::vector<double> kernel_warmup_losses;
  std::vector<IterationRecord> iterations;
  std::vector<SelectionRecord> selections;
  std::vector<KernelSnapshot> kernels;
  double wall_seconds = 0.0;
  double final_core_loss = 0.0;
  double final_cil_loss = 0.0;
  bool diverged = false;
  std::string divergence_message;
  std::map<std::string, double> final_metrics;  // filled by callers that hold ground truth
};

template <typename Scalar>
std::vector<Kernel<Scalar>> draw_kernel_batch(TrainState<Scalar>& s, const TrainConfig& cfg, long iteration,
                                              RunReport* report, std::vector<double>* js = nullptr) {
  const auto picks = sample_batch(s.history, s.sampler_rng, cfg.kl_batch, cfg.sampling());
  std::vector<Kernel<Scalar>> batch;
  for (const auto& p : picks) {
    batch.push_back(p.kernel.template cast<Scalar>());
    if (js) js->push_back(p.score.j);
    if (report) report->selections.push_back({iteration, p.score.j, p.score.s_avg, p.score.s_min, p.score.s_max, p.spec});
  }
  return batch;
}

/// Warm starts: G_x is fitted to the bicubic upsampling of y and G_k to the
/// sampled kernel prior before the alternating loop begins.
template <typename Scalar>
void warm_start(TrainState<Scalar>& s, const Image<Scalar>& y, const TrainConfig& cfg, RunReport* report) {
  if (cfg.image_warmup > 0) {
    const Image<Scalar> target = upsample_bicubic(y, cfg.scale).cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    const double n = static_cast<double>(target.size());
    for (int t = 0; t < cfg.image_warmup; ++t) {
      typename nn::UNet<Scalar>::Tape tape;
      const Image<Scalar> x = s.net.forward(s.phi_x, s.z_x, s.sr_height, s.sr_width, &tape);
      const Image<Scalar> d = x - target;
      const double loss = static_cast<double>(d.template cast<double>().squaredNorm()) / n;
      guard_loss(loss, "image warm start", 0, cfg.divergence_limit);
      s.adam_x.step(s.phi_x, s.net.backward(s.phi_x, tape, Image<Scalar>(d * static_cast<Scalar>(2.0 / n))),
                    cfg.lr_image);
      if (report) report->image_warmup_losses.push_back(loss);
    }
  }
  for (int t = 0; t < cfg.kernel_warmup; ++t) {
    const double loss = kl_step(s, draw_kernel_batch(s, cfg, -1, report), cfg);
    if (report) report->kernel_warmup_losses.push_back(loss);
  }
  s.phi_h = s.phi_x;
  s.x_history = s.history_image();
}

/// One outer iteration: sample batch, KL step, k_CIL, P image updates, meta weighting, kernel meta step.
template <typename Scalar>
IterationRecord outer_iteration(TrainState<Scalar>& s, const Image<Scalar>& y, const TrainConfig& cfg,
                                RunReport* report) {
  IterationRecord rec;
  rec.iteration = s.outer;
  const auto batch = draw_kernel_batch(s, cfg, s.outer, report, &rec.sampled_j);
  rec.kl_loss = kl_step(s, batch, cfg);
  const Kernel<Scalar> k_cil = s.kernel();
  auto inner = cil_inner_loop(s, k_cil, y, cfg);
  const MetaWeights w = meta_weights(inner.core);
  rec.meta_loss = meta_step(s, inner, w.omega, y, cfg);
  rec.core = std::move(inner.core);
  rec.cil = std::move(inner.cil);
  rec.contrast = std::move(inner.contrast);
  rec.alphas = std::move(inner.alphas);
  rec.pi = w.pi;
  rec.omega = w.omega;
  ++s.outer;
  return rec;
}

template <typename Scalar>
struct RunOutput {
  Image<Scalar> image;
  Kernel<Scalar> kernel;
};

/// Full alternating optimization. The report is filled as the run proceeds,
/// so it holds the partial trace if a DivergenceError escapes.
template <typename Scalar>
RunOutput<Scalar> run_hacbsr(const Image<Scalar>& y, const TrainConfig& cfg, RunReport& report,
                             std::optional<TrainState<Scalar>>* state_out = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  report = RunReport{};
  report.config = cfg;
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  TrainState<Scalar> s = make_train_state<Scalar>(y.rows(), y.cols(), cfg);
  try {
    warm_start(s, y, cfg, &report);
    for (int i = 0; i < cfg.outer_iters; ++i) {
      report.iterations.push_back(outer_iteration(s, y, cfg, &report));
      if (cfg.snapshot_period > 0 && (s.outer % cfg.snapshot_period == 0 || i + 1 == cfg.outer_iters))
        report.kernels.push_back({s.outer, s.kernel().values().template cast<double>()});
    }
  } catch (const DivergenceError& e) {
    report.diverged = true;
    report.divergence_message = e.what();
    report.wall_seconds = elapsed();
    throw;
  }
  RunOutput<Scalar> out{s.image(), s.kernel()};
  const auto final_terms = cil_terms(out.image, s.x_history, out.kernel, y, cfg.scale, cfg.effective_theta(),
                                     s.encoder.get());
  report.final_core_loss = final_terms.core;
  report.final_cil_loss = final_terms.total;
  report.wall_seconds = elapsed();
  if (state_out) state_out->emplace(std::move(s));
  return out;
}

}  // namespace hacbsr
