#pragma once

#include <random>

#include "hacbsr/core.hpp"
#include "hacbsr/degradation.hpp"

namespace hacbsr::nn {

struct KernelGeneratorConfig {
  Index kernel_size = 11;
  Index noise_dim = 64;
  Index hidden = 1000;
};

/// Kernel generator G_k: Linear -> ReLU -> Linear -> softmax over K*K entries.
/// The second layer is scaled by 1/hidden with unit-variance weights, so a
/// large learning rate moves the logits at O(1) per step instead of
/// saturating the softmax.
template <typename Scalar>
class KernelGenerator {
 public:
  struct Tape {
    Vector<Scalar> pre;
    Vector<Scalar> hidden;
    Vector<Scalar> probs;
  };

  explicit KernelGenerator(KernelGeneratorConfig cfg = {}) : cfg_(cfg) {
    if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0) throw ConfigurationError("kernel size must be odd");
    if (cfg.noise_dim < 1 || cfg.hidden < 1) throw ConfigurationError("kernel generator sizes must be positive");
    const Index k2 = cfg.kernel_size * cfg.kernel_size;
    w1_ = 0;
    b1_ = w1_ + cfg.hidden * cfg.noise_dim;
    w2_ = b1_ + cfg.hidden;
    b2_ = w2_ + k2 * cfg.hidden;
    count_ = b2_ + k2;
  }

  const KernelGeneratorConfig& config() const { return cfg_; }
  Index parameter_count() const { return count_; }

  Vector<Scalar> init(Rng& rng) const {
    Vector<Scalar> p = Vector<Scalar>::Zero(count_);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.noise_dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = w1_; i < w2_; ++i) p[i] = static_cast<Scalar>(u(rng));
    std::normal_distribution<double> n(0.0, 1.0);
    for (Index i = w2_; i < b2_; ++i) p[i] = static_cast<Scalar>(n(rng));
    return p;
  }

  /// Flat K*K probabilities in row-major kernel order.
  Vector<Scalar> forward(const Vector<Scalar>& params, const Vector<Scalar>& z, Tape* tape = nullptr) const {
    check(params, z);
    const Index k2 = cfg_.kernel_size * cfg_.kernel_size;
    const ConstMat w1(params.data() + w1_, cfg_.hidden, cfg_.noise_dim);
    const ConstMat w2(params.data() + w2_, k2, cfg_.hidden);
    Vector<Scalar> pre = w1 * z + params.segment(b1_, cfg_.hidden);
    Vector<Scalar> h = pre.cwiseMax(Scalar(0));
    Vector<Scalar> logits = (w2 * h) / static_cast<Scalar>(cfg_.hidden) + params.segment(b2_, k2);
    Vector<Scalar> probs = (logits.array() - logits.maxCoeff()).exp().matrix();
    probs /= probs.sum();
    if (tape) {
      tape->pre = std::move(pre);
      tape->hidden = std::move(h);
      tape->probs = probs;
    }
    return probs;
  }

  Kernel<Scalar> kernel(const Vector<Scalar>& params, const Vector<Scalar>& z) const {
    return as_kernel(forward(params, z));
  }

  Kernel<Scalar> as_kernel(const Vector<Scalar>& probs) const {
    Image<Scalar> g = Eigen::Map<const Image<Scalar>>(probs.data(), cfg_.kernel_size, cfg_.kernel_size);
    return Kernel<Scalar>::normalized(std::move(g));
  }

  /// Parameter gradient given dL/d(probabilities).
  Vector<Scalar> backward(const Vector<Scalar>& params, const Vector<Scalar>& z, const Tape& tape,
                          const Vector<Scalar>& grad_probs) const {
    const Index k2 = cfg_.kernel_size * cfg_.kernel_size;
    const Scalar inv_h = Scalar(1) / static_cast<Scalar>(cfg_.hidden);
    Vector<Scalar> grad = Vector<Scalar>::Zero(count_);
    const Scalar dot = tape.probs.dot(grad_probs);
    const Vector<Scalar> dlogits = tape.probs.cwiseProduct((grad_probs.array() - dot).matrix());
    Mat(grad.data() + w2_, k2, cfg_.hidden).noalias() = (dlogits * tape.hidden.transpose()) * inv_h;
    grad.segment(b2_, k2) = dlogits;
    const ConstMat w2(params.data() + w2_, k2, cfg_.hidden);
    Vector<Scalar> dh = (w2.transpose() * dlogits) * inv_h;
    for (Index i = 0; i < cfg_.hidden; ++i)
      if (tape.pre[i] <= Scalar(0)) dh[i] = Scalar(0);
    Mat(grad.data() + w1_, cfg_.hidden, cfg_.noise_dim).noalias() = dh * z.transpose();
    grad.segment(b1_, cfg_.hidden) = dh;
    return grad;
  }

 private:
  using Mat = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMat = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  void check(const Vector<Scalar>& params, const Vector<Scalar>& z) const {
    if (params.size() != count_) throw ConfigurationError("kernel generator parameter vector has the wrong size");
    if (z.size() != cfg_.noise_dim) throw ConfigurationError("kernel generator noise has the wrong length");
  }

  KernelGeneratorConfig cfg_;
  Index w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, count_ = 0;
};

template <typename Scalar>
Vector<Scalar> make_kernel_noise(Index dim, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 0.1);
  Vector<Scalar> z(dim);
  for (Index i = 0; i < dim; ++i) z[i] = static_cast<Scalar>(u(rng));
  return z;
}

}  // namespace hacbsr::nn
