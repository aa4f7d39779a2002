#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <type_traits>

#include "hacbsr/errors.hpp"

namespace hacbsr {

using Eigen::Index;

/// Row-major 2D grid. vec(x) is the row-major flattening x(i, j) -> i * W + j.
template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
auto vec(const Image<Scalar>& x) {
  return Eigen::Map<const Vector<Scalar>>(x.data(), x.size());
}

template <typename Scalar>
Image<Scalar> unvec(const Vector<Scalar>& v, Index height, Index width) {
  if (v.size() != height * width) throw ShapeError("unvec: size mismatch");
  return Eigen::Map<const Image<Scalar>>(v.data(), height, width);
}

template <typename Scalar>
constexpr Scalar kernel_sum_tolerance() {
  return std::is_same_v<Scalar, float> ? Scalar(1e-5) : Scalar(1e-6);
}

/// Anisotropic Gaussian covariance parameters. sigma1 acts along the
/// horizontal (column) axis, sigma2 along the vertical (row) axis.
struct CovarianceSpec {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double rho = 0.0;

  bool valid() const {
    return std::isfinite(sigma1) && std::isfinite(sigma2) && std::isfinite(rho) && sigma1 > 0 &&
           sigma2 > 0 && std::abs(rho) < 1.0;
  }

  Eigen::Matrix2d covariance() const {
    Eigen::Matrix2d s;
    s << sigma1 * sigma1, rho * sigma1 * sigma2, rho * sigma1 * sigma2, sigma2 * sigma2;
    return s;
  }

  void validate() const {
    if (!valid() || covariance().determinant() <= 0.0)
      throw DomainError("covariance spec is not positive definite");
  }
};

/// Normalized, nonnegative, odd-sized square blur kernel.
template <typename Scalar>
class Kernel {
 public:
  using Grid = Image<Scalar>;

  Kernel() = default;

  explicit Kernel(Grid values) : values_(std::move(values)) { validate(); }

  static Kernel delta(Index size) {
    Grid g = Grid::Zero(size, size);
    g(size / 2, size / 2) = Scalar(1);
    return Kernel(std::move(g));
  }

  static Kernel uniform(Index size) {
    return Kernel(Grid::Constant(size, size, Scalar(1) / Scalar(size * size)));
  }

  /// Clamps negatives to zero and rescales to unit sum.
  static Kernel normalized(Grid values) {
    values = values.cwiseMax(Scalar(0));
    const Scalar total = values.sum();
    if (!(total > Scalar(0))) throw DomainError("kernel has no positive mass");
    values /= total;
    return Kernel(std::move(values));
  }

  Index size() const { return values_.rows(); }
  Index radius() const { return values_.rows() / 2; }
  const Grid& values() const { return values_; }
  Scalar operator()(Index i, Index j) const { return values_(i, j); }

  Kernel transposed() const { return Kernel(Grid(values_.transpose())); }

  template <typename Other>
  Kernel<Other> cast() const {
    return Kernel<Other>::normalized(values_.template cast<Other>());
  }

 private:
  void validate() const {
    if (values_.rows() != values_.cols()) throw ShapeError("kernel must be square");
    if (values_.rows() % 2 == 0) throw ArgumentError("kernel size must be odd");
    if (!values_.allFinite() || values_.minCoeff() < Scalar(0))
      throw DomainError("kernel entries must be finite and nonnegative");
    if (std::abs(values_.sum() - Scalar(1)) > kernel_sum_tolerance<Scalar>())
      throw DomainError("kernel entries must sum to 1");
  }

  Grid values_;
};

/// Default kernel support for a scale factor: 11/15/19 for x2/x3/x4.
inline Index default_kernel_size(int scale) { return 4 * scale + 3; }

}  // namespace hacbsr
