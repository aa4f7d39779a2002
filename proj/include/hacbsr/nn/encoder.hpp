#pragma once

#include <memory>
#include <random>
#include <string>

#include <cstdint>

#include "hacbsr/degradation.hpp"

namespace hacbsr::nn {

/// Frozen feature map f_c. Implementations must be linear in x for the
/// stability analysis to apply; the optimizer only needs encode and its transpose.
template <typename Scalar>
class FeatureEncoder {
 public:
  virtual ~FeatureEncoder() = default;
  virtual std::string kind() const = 0;
  virtual Index input_size() const = 0;
  virtual Index feature_dim() const = 0;
  virtual Vector<Scalar> encode(const Image<Scalar>& x) const = 0;
  /// Pullback of a feature-space gradient to image space.
  virtual Image<Scalar> backward(const Vector<Scalar>& grad_features, Index height, Index width) const = 0;

 protected:
  void check_input(const Image<Scalar>& x) const {
    if (x.size() != input_size()) throw ShapeError("encoder input size mismatch");
  }
};

template <typename Scalar>
class IdentityEncoder final : public FeatureEncoder<Scalar> {
 public:
  explicit IdentityEncoder(Index n) : n_(n) {}
  std::string kind() const override { return "identity"; }
  Index input_size() const override { return n_; }
  Index feature_dim() const override { return n_; }
  Vector<Scalar> encode(const Image<Scalar>& x) const override {
    this->check_input(x);
    return vec(x);
  }
  Image<Scalar> backward(const Vector<Scalar>& g, Index height, Index width) const override {
    return unvec(g, height, width);
  }

 private:
  Index n_;
};

/// B with i.i.d. N(0, 1/d) entries, d rows and one column per pixel.
template <typename Scalar>
class LinearRandomEncoder final : public FeatureEncoder<Scalar> {
 public:
  LinearRandomEncoder(Index feature_dim, Index input_size, std::uint64_t seed) : seed_(seed) {
    if (feature_dim < 1 || input_size < 1) throw ArgumentError("encoder dimensions must be positive");
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(feature_dim)));
    Eigen::MatrixXd b(feature_dim, input_size);
    for (Index j = 0; j < input_size; ++j)
      for (Index i = 0; i < feature_dim; ++i) b(i, j) = n(rng);
    const Eigen::MatrixXd gram = feature_dim <= input_size ? Eigen::MatrixXd(b * b.transpose())
                                                           : Eigen::MatrixXd(b.transpose() * b);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    sigma_min_ = std::sqrt(std::max(0.0, es.eigenvalues()[0]));
    if (!(sigma_min_ > 0.0)) throw DomainError("random encoder matrix is rank deficient");
    b_ = b.cast<Scalar>();
  }

  std::string kind() const override { return "linear-random"; }
  Index input_size() const override { return b_.cols(); }
  Index feature_dim() const override { return b_.rows(); }
  std::uint64_t seed() const { return seed_; }
  /// Smallest of the min(d, n) singular values, checked at construction.
  double sigma_min() const { return sigma_min_; }
  const Matrix<Scalar>& matrix() const { return b_; }

  Vector<Scalar> encode(const Image<Scalar>& x) const override {
    this->check_input(x);
    return b_ * vec(x);
  }
  Image<Scalar> backward(const Vector<Scalar>& g, Index height, Index width) const override {
    return unvec(Vector<Scalar>(b_.transpose() * g), height, width);
  }

 private:
  std::uint64_t seed_;
  double sigma_min_ = 0.0;
  Matrix<Scalar> b_;
};

template <typename Scalar>
std::unique_ptr<FeatureEncoder<Scalar>> make_encoder(const std::string& kind, Index feature_dim, Index input_size,
                                                     std::uint64_t seed) {
  if (kind == "linear-random") return std::make_unique<LinearRandomEncoder<Scalar>>(feature_dim, input_size, seed);
  if (kind == "identity") return std::make_unique<IdentityEncoder<Scalar>>(input_size);
  throw ArgumentError("unknown encoder kind '" + kind + "'");
}

}  // namespace hacbsr::nn
