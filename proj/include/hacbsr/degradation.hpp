#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hacbsr/core.hpp"

namespace hacbsr {

using Rng = std::mt19937_64;

/// Independent generator streams derived from one seed.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Mirror index about the edge pixels (no edge repetition): -1 -> 1, n -> n - 2.
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Anisotropic Gaussian evaluated on the integer grid centred at ((K-1)/2, (K-1)/2)
/// and renormalized to unit sum.
template <typename Scalar = double>
Kernel<Scalar> gaussian_kernel(const CovarianceSpec& spec, Index size) {
  if (size <= 0 || size % 2 == 0) throw ArgumentError("gaussian_kernel: size must be odd and positive");
  spec.validate();
  const Eigen::Matrix2d inv = spec.covariance().inverse();
  const double center = static_cast<double>(size - 1) / 2.0;
  Image<double> grid(size, size);
  for (Index i = 0; i < size; ++i) {
    for (Index j = 0; j < size; ++j) {
      const Eigen::Vector2d h(static_cast<double>(j) - center, static_cast<double>(i) - center);
      grid(i, j) = std::exp(-0.5 * h.dot(inv * h));
    }
  }
  grid /= grid.sum();
  return Kernel<Scalar>(grid.cast<Scalar>());
}

inline CovarianceSpec sample_covariance(Rng& rng, Range sigma_range, Range rho_range) {
  if (!(sigma_range.lo > 0.0) || sigma_range.hi < sigma_range.lo)
    throw ArgumentError("sample_covariance: sigma range must satisfy 0 < lo <= hi");
  if (rho_range.hi < rho_range.lo || rho_range.lo <= -1.0 || rho_range.hi >= 1.0)
    throw ArgumentError("sample_covariance: rho range must lie inside (-1, 1) with lo <= hi");
  auto draw = [&rng](Range r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  CovarianceSpec spec;
  spec.sigma1 = draw(sigma_range);
  spec.sigma2 = draw(sigma_range);
  spec.rho = draw(rho_range);
  return spec;
}

/// Default sampling ranges: sigma in [0.7, 2.5 s], rho in [-0.8, 0.8].
inline Range default_sigma_range(int scale) { return {0.7, 2.5 * scale}; }
inline Range default_rho_range() { return {-0.8, 0.8}; }

enum class DownsampleMode { Strided, Bicubic };

template <typename Scalar>
struct DegradationSpec {
  Kernel<Scalar> kernel;
  int scale = 2;
  double noise_sigma = 0.0;
  DownsampleMode mode = DownsampleMode::Strided;

  void validate() const {
    if (scale < 2 || scale > 4) throw ArgumentError("degradation scale must be 2, 3 or 4");
    if (!(noise_sigma >= 0.0)) throw ArgumentError("noise sigma must be nonnegative");
  }
};

namespace detail {

inline void check_degrade_shapes(Index height, Index width, Index ksize, int scale) {
  if (scale < 1) throw ArgumentError("scale must be positive");
  if (height % scale != 0 || width % scale != 0)
    throw ShapeError("image dimensions must be divisible by the scale factor");
  if (ksize > height || ksize > width) throw ShapeError("kernel must not be larger than the image");
}

/// taps(o, a) = reflected source coordinate feeding output o through kernel tap a.
inline std::vector<Index> tap_table(Index out_len, Index in_len, Index ksize, int scale) {
  const Index c = ksize / 2;
  std::vector<Index> taps(static_cast<size_t>(out_len * ksize));
  for (Index o = 0; o < out_len; ++o)
    for (Index a = 0; a < ksize; ++a)
      taps[static_cast<size_t>(o * ksize + a)] = reflect_index(o * scale - a + c, in_len);
  return taps;
}

}  // namespace detail

/// Blur with reflective padding followed by keeping every s-th pixel from offset 0.
/// Convolution is the flipped-kernel form, so a centred delta image reproduces k.
template <typename Scalar>
Image<Scalar> degrade_noiseless(const Image<Scalar>& x, const Kernel<Scalar>& k, int scale) {
  const Index ks = k.size();
  detail::check_degrade_shapes(x.rows(), x.cols(), ks, scale);
  const Index oh = x.rows() / scale, ow = x.cols() / scale;
  const auto rt = detail::tap_table(oh, x.rows(), ks, scale);
  const auto ct = detail::tap_table(ow, x.cols(), ks, scale);
  Image<Scalar> out(oh, ow);
  for (Index oi = 0; oi < oh; ++oi) {
    for (Index oj = 0; oj < ow; ++oj) {
      Scalar acc(0);
      for (Index a = 0; a < ks; ++a) {
        const Scalar* xrow = x.data() + rt[oi * ks + a] * x.cols();
        const Index* cols = &ct[oj * ks];
        for (Index b = 0; b < ks; ++b) acc += k(a, b) * xrow[cols[b]];
      }
      out(oi, oj) = acc;
    }
  }
  return out;
}

template <typename Scalar>
Image<Scalar> blur(const Image<Scalar>& x, const Kernel<Scalar>& k) {
  return degrade_noiseless(x, k, 1);
}

/// Transpose of degrade_noiseless applied to a low-resolution residual.
template <typename Scalar>
Image<Scalar> degrade_adjoint(const Image<Scalar>& r, const Kernel<Scalar>& k, int scale, Index height,
                              Index width) {
  const Index ks = k.size();
  detail::check_degrade_shapes(height, width, ks, scale);
  if (r.rows() != height / scale || r.cols() != width / scale)
    throw ShapeError("degrade_adjoint: residual shape mismatch");
  const auto rt = detail::tap_table(r.rows(), height, ks, scale);
  const auto ct = detail::tap_table(r.cols(), width, ks, scale);
  Image<Scalar> out = Image<Scalar>::Zero(height, width);
  for (Index oi = 0; oi < r.rows(); ++oi) {
    for (Index oj = 0; oj < r.cols(); ++oj) {
      const Scalar v = r(oi, oj);
      for (Index a = 0; a < ks; ++a) {
        Scalar* orow = out.data() + rt[oi * ks + a] * width;
        const Index* cols = &ct[oj * ks];
        for (Index b = 0; b < ks; ++b) orow[cols[b]] += k(a, b) * v;
      }
    }
  }
  return out;
}

/// Gradient of <r, degrade_noiseless(x, k, s)> with respect to the kernel entries.
template <typename Scalar>
Image<Scalar> kernel_gradient(const Image<Scalar>& x, const Image<Scalar>& r, int scale, Index ksize) {
  detail::check_degrade_shapes(x.rows(), x.cols(), ksize, scale);
  if (r.rows() != x.rows() / scale || r.cols() != x.cols() / scale)
    throw ShapeError("kernel_gradient: residual shape mismatch");
  const auto rt = detail::tap_table(r.rows(), x.rows(), ksize, scale);
  const auto ct = detail::tap_table(r.cols(), x.cols(), ksize, scale);
  Image<Scalar> g = Image<Scalar>::Zero(ksize, ksize);
  for (Index oi = 0; oi < r.rows(); ++oi) {
    for (Index oj = 0; oj < r.cols(); ++oj) {
      const Scalar v = r(oi, oj);
      for (Index a = 0; a < ksize; ++a) {
        const Scalar* xrow = x.data() + rt[oi * ksize + a] * x.cols();
        const Index* cols = &ct[oj * ksize];
        for (Index b = 0; b < ksize; ++b) g(a, b) += v * xrow[cols[b]];
      }
    }
  }
  return g;
}

inline constexpr Index kMaxDenseDim = 4096;

/// Dense matrix A with A * vec(x) == vec(degrade_noiseless(x, k, s)).
template <typename Scalar>
Matrix<Scalar> degradation_matrix(const Kernel<Scalar>& k, int scale, Index height, Index width) {
  if (height * width > kMaxDenseDim)
    throw CapacityError("degradation_matrix: H*W exceeds the dense guard of 4096");
  const Index ks = k.size();
  detail::check_degrade_shapes(height, width, ks, scale);
  const Index oh = height / scale, ow = width / scale;
  const auto rt = detail::tap_table(oh, height, ks, scale);
  const auto ct = detail::tap_table(ow, width, ks, scale);
  Matrix<Scalar> a = Matrix<Scalar>::Zero(oh * ow, height * width);
  for (Index oi = 0; oi < oh; ++oi)
    for (Index oj = 0; oj < ow; ++oj)
      for (Index p = 0; p < ks; ++p)
        for (Index q = 0; q < ks; ++q)
          a(oi * ow + oj, rt[oi * ks + p] * width + ct[oj * ks + q]) += k(p, q);
  return a;
}

namespace detail {

inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

/// Row-stochastic 1D bicubic resampling matrix, pixel-centre aligned, edge-clamped.
inline Eigen::MatrixXd bicubic_operator(Index in_len, Index out_len) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out_len, in_len);
  const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (Index o = 0; o < out_len; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const auto base = static_cast<Index>(std::floor(src));
    for (Index t = base - 1; t <= base + 2; ++t) {
      const Index clamped = std::clamp<Index>(t, 0, in_len - 1);
      w(o, clamped) += cubic_weight(src - static_cast<double>(t));
    }
  }
  return w;
}

}  // namespace detail

template <typename Scalar>
Image<Scalar> resize_bicubic(const Image<Scalar>& x, Index out_height, Index out_width) {
  const Eigen::MatrixXd rows = detail::bicubic_operator(x.rows(), out_height);
  const Eigen::MatrixXd cols = detail::bicubic_operator(x.cols(), out_width);
  const Eigen::MatrixXd xd = x.template cast<double>();
  const Eigen::MatrixXd out = rows * xd * cols.transpose();
  return out.cast<Scalar>();
}

template <typename Scalar>
Image<Scalar> upsample_bicubic(const Image<Scalar>& y, int scale) {
  return resize_bicubic(y, y.rows() * scale, y.cols() * scale);
}

/// Full degradation y = (x (*) k) downsampled + n with n ~ N(0, noise_sigma^2).
template <typename Scalar>
Image<Scalar> degrade(const Image<Scalar>& x, const Kernel<Scalar>& k, int scale, double noise_sigma, Rng& rng,
                      DownsampleMode mode = DownsampleMode::Strided) {
  Image<Scalar> y;
  if (mode == DownsampleMode::Strided) {
    y = degrade_noiseless(x, k, scale);
  } else {
    detail::check_degrade_shapes(x.rows(), x.cols(), k.size(), scale);
    y = resize_bicubic(blur(x, k), x.rows() / scale, x.cols() / scale);
  }
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (Index i = 0; i < y.size(); ++i) y.data()[i] += static_cast<Scalar>(noise(rng));
  }
  return y;
}

template <typename Scalar>
Image<Scalar> degrade(const Image<Scalar>& x, const DegradationSpec<Scalar>& spec, Rng& rng) {
  spec.validate();
  return degrade(x, spec.kernel, spec.scale, spec.noise_sigma, rng, spec.mode);
}

}  // namespace hacbsr
