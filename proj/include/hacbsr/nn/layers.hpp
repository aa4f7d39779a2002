#pragma once

#include <cmath>
#include <random>

#include "hacbsr/degradation.hpp"

namespace hacbsr::nn {

/// Activations are stored channel-major: one row per channel, each row a
/// row-major H*W plane.
template <typename Scalar>
using Planes = Image<Scalar>;

template <typename Scalar>
using RowMajorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename Scalar>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// 3x3 reflect-padded patches: row c*9 + 3*di + dj holds x(c, i+di-1, j+dj-1).
template <typename Scalar>
Planes<Scalar> im2col3(const Planes<Scalar>& x, Index height, Index width) {
  const Index ch = x.rows();
  Planes<Scalar> cols(ch * 9, height * width);
  for (Index c = 0; c < ch; ++c) {
    const Scalar* src = x.row(c).data();
    for (int di = 0; di < 3; ++di) {
      for (int dj = 0; dj < 3; ++dj) {
        Scalar* dst = cols.row(c * 9 + 3 * di + dj).data();
        for (Index i = 0; i < height; ++i) {
          const Scalar* srow = src + reflect_index(i + di - 1, height) * width;
          Scalar* drow = dst + i * width;
          drow[0] = srow[reflect_index(dj - 1, width)];
          for (Index j = 1; j + 1 < width; ++j) drow[j] = srow[j + dj - 1];
          if (width > 1) drow[width - 1] = srow[reflect_index(width - 2 + dj, width)];
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
Planes<Scalar> col2im3(const Planes<Scalar>& cols, Index channels, Index height, Index width) {
  Planes<Scalar> x = Planes<Scalar>::Zero(channels, height * width);
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = x.row(c).data();
    for (int di = 0; di < 3; ++di) {
      for (int dj = 0; dj < 3; ++dj) {
        const Scalar* src = cols.row(c * 9 + 3 * di + dj).data();
        for (Index i = 0; i < height; ++i) {
          Scalar* drow = dst + reflect_index(i + di - 1, height) * width;
          const Scalar* srow = src + i * width;
          drow[reflect_index(dj - 1, width)] += srow[0];
          for (Index j = 1; j + 1 < width; ++j) drow[j + dj - 1] += srow[j];
          if (width > 1) drow[reflect_index(width - 2 + dj, width)] += srow[width - 1];
        }
      }
    }
  }
  return x;
}

template <typename Scalar>
Planes<Scalar> avg_pool2(const Planes<Scalar>& x, Index height, Index width) {
  const Index h2 = height / 2, w2 = width / 2;
  Planes<Scalar> out(x.rows(), h2 * w2);
  for (Index c = 0; c < x.rows(); ++c)
    for (Index i = 0; i < h2; ++i)
      for (Index j = 0; j < w2; ++j) {
        const Index p = 2 * i * width + 2 * j;
        out(c, i * w2 + j) = Scalar(0.25) * (x(c, p) + x(c, p + 1) + x(c, p + width) + x(c, p + width + 1));
      }
  return out;
}

template <typename Scalar>
Planes<Scalar> avg_pool2_backward(const Planes<Scalar>& g, Index height, Index width) {
  const Index w2 = width / 2;
  Planes<Scalar> dx(g.rows(), height * width);
  for (Index c = 0; c < g.rows(); ++c)
    for (Index i = 0; i < height; ++i)
      for (Index j = 0; j < width; ++j) dx(c, i * width + j) = Scalar(0.25) * g(c, (i / 2) * w2 + j / 2);
  return dx;
}

/// Nearest-neighbour x2 upsampling from (height, width).
template <typename Scalar>
Planes<Scalar> upsample_nearest2(const Planes<Scalar>& x, Index height, Index width) {
  const Index w2 = 2 * width;
  Planes<Scalar> out(x.rows(), 4 * height * width);
  for (Index c = 0; c < x.rows(); ++c)
    for (Index i = 0; i < 2 * height; ++i)
      for (Index j = 0; j < w2; ++j) out(c, i * w2 + j) = x(c, (i / 2) * width + j / 2);
  return out;
}

template <typename Scalar>
Planes<Scalar> upsample_nearest2_backward(const Planes<Scalar>& g, Index height, Index width) {
  const Index w2 = 2 * width;
  Planes<Scalar> dx = Planes<Scalar>::Zero(g.rows(), height * width);
  for (Index c = 0; c < g.rows(); ++c)
    for (Index i = 0; i < 2 * height; ++i)
      for (Index j = 0; j < w2; ++j) dx(c, (i / 2) * width + j / 2) += g(c, i * w2 + j);
  return dx;
}

inline constexpr double kInstanceNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

/// conv3x3 (no bias) -> affine instance norm -> LeakyReLU, with the tape needed for backward.
template <typename Scalar>
struct ConvNormAct {
  Index in_ch = 0;
  Index out_ch = 0;
  Index weight_offset = 0;  // out_ch * in_ch * 9 weights, PyTorch [out][in][3][3] order
  Index gamma_offset = 0;
  Index beta_offset = 0;

  struct Tape {
    Planes<Scalar> cols;
    Planes<Scalar> xhat;
    Vector<Scalar> inv_std;
    Planes<Scalar> pre_act;
  };

  Index parameter_count() const { return out_ch * in_ch * 9 + 2 * out_ch; }

  Index assign(Index offset) {
    weight_offset = offset;
    gamma_offset = weight_offset + out_ch * in_ch * 9;
    beta_offset = gamma_offset + out_ch;
    return beta_offset + out_ch;
  }

  void init(Vector<Scalar>& params, Rng& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * 9));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < out_ch * in_ch * 9; ++i) params[weight_offset + i] = static_cast<Scalar>(u(rng));
    params.segment(gamma_offset, out_ch).setOnes();
    params.segment(beta_offset, out_ch).setZero();
  }

  Planes<Scalar> forward(const Vector<Scalar>& params, const Planes<Scalar>& x, Index height, Index width,
                         Tape* tape) const {
    const ConstRowMajorMap<Scalar> w(params.data() + weight_offset, out_ch, in_ch * 9);
    Planes<Scalar> cols = im2col3(x, height, width);
    Planes<Scalar> z;
    z.noalias() = w * cols;
    const Scalar n = static_cast<Scalar>(height * width);
    Vector<Scalar> inv_std(out_ch);
    for (Index c = 0; c < out_ch; ++c) {
      auto row = z.row(c).array();
      const Scalar mean = row.sum() / n;
      row -= mean;
      const Scalar var = row.square().sum() / n;
      inv_std[c] = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kInstanceNormEps));
      row *= inv_std[c];
    }
    Planes<Scalar> pre(out_ch, height * width);
    for (Index c = 0; c < out_ch; ++c)
      pre.row(c) = (z.row(c).array() * params[gamma_offset + c] + params[beta_offset + c]).matrix();
    Planes<Scalar> out = pre.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : static_cast<Scalar>(kLeakySlope) * v; });
    if (tape) {
      tape->cols = std::move(cols);
      tape->xhat = std::move(z);
      tape->inv_std = std::move(inv_std);
      tape->pre_act = std::move(pre);
    }
    return out;
  }

  Planes<Scalar> backward(const Vector<Scalar>& params, const Tape& tape, const Planes<Scalar>& grad_out,
                          Index height, Index width, Vector<Scalar>& grad) const {
    const Scalar n = static_cast<Scalar>(height * width);
    Planes<Scalar> dpre = grad_out.binaryExpr(tape.pre_act, [](Scalar g, Scalar p) {
      return p > Scalar(0) ? g : static_cast<Scalar>(kLeakySlope) * g;
    });
    Planes<Scalar> dz(out_ch, height * width);
    for (Index c = 0; c < out_ch; ++c) {
      const auto dy = dpre.row(c).array();
      const auto xh = tape.xhat.row(c).array();
      grad[gamma_offset + c] += (dy * xh).sum();
      grad[beta_offset + c] += dy.sum();
      const auto dxh = dy * params[gamma_offset + c];
      const Scalar s1 = dxh.sum(), s2 = (dxh * xh).sum();
      dz.row(c) = ((n * dxh - s1 - xh * s2) * (tape.inv_std[c] / n)).matrix();
    }
    RowMajorMap<Scalar> dw(grad.data() + weight_offset, out_ch, in_ch * 9);
    dw.noalias() += dz * tape.cols.transpose();
    const ConstRowMajorMap<Scalar> w(params.data() + weight_offset, out_ch, in_ch * 9);
    Planes<Scalar> dcols;
    dcols.noalias() = w.transpose() * dz;
    return col2im3(dcols, in_ch, height, width);
  }
};

template <typename Scalar>
Planes<Scalar> concat_channels(const Planes<Scalar>& a, const Planes<Scalar>& b) {
  Planes<Scalar> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace hacbsr::nn
