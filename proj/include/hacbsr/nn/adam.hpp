#pragma once

#include <cmath>

#include "hacbsr/core.hpp"

namespace hacbsr::nn {

/// Adam with bias correction. The learning rate is passed per step so one
/// moment state can serve several update rules on the same parameters.
template <typename Scalar>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Adam() = default;
  explicit Adam(Index n) { reset(n); }

  void reset(Index n) {
    m_ = Vector<Scalar>::Zero(n);
    v_ = Vector<Scalar>::Zero(n);
    t_ = 0;
  }

  void step(Vector<Scalar>& params, const Vector<Scalar>& grad, double lr) {
    if (grad.size() != params.size() || m_.size() != params.size())
      throw ShapeError("Adam: gradient and state sizes must match the parameters");
    ++t_;
    const auto b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const auto step_size = static_cast<Scalar>(lr / c1);
    const auto root_c2 = static_cast<Scalar>(std::sqrt(c2));
    const auto e = static_cast<Scalar>(eps);
    params.array() -= step_size * m_.array() / (v_.array().sqrt() / root_c2 + e);
  }

  long steps() const { return t_; }
  const Vector<Scalar>& first_moment() const { return m_; }
  const Vector<Scalar>& second_moment() const { return v_; }

  void restore(Vector<Scalar> m, Vector<Scalar> v, long t) {
    if (m.size() != v.size()) throw ShapeError("Adam: moment sizes differ");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  Vector<Scalar> m_;
  Vector<Scalar> v_;
  long t_ = 0;
};

}  // namespace hacbsr::nn
