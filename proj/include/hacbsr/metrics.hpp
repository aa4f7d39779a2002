#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hacbsr/core.hpp"

namespace hacbsr {

inline constexpr double kPsnrCap = 100.0;

inline double psnr_from_mse(double mse, double peak) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

template <typename Scalar>
double psnr(const Image<Scalar>& a, const Image<Scalar>& b, double peak = 1.0) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("psnr: image shapes differ");
  const double mse = (a.template cast<double>() - b.template cast<double>()).squaredNorm() / static_cast<double>(a.size());
  return psnr_from_mse(mse, peak);
}

namespace detail {

inline Eigen::VectorXd gaussian_window(Index size, double sigma) {
  Eigen::VectorXd w(size);
  const double c = static_cast<double>(size - 1) / 2.0;
  for (Index i = 0; i < size; ++i) w[i] = std::exp(-0.5 * std::pow((static_cast<double>(i) - c) / sigma, 2));
  return w / w.sum();
}

/// Separable 'valid' filtering with a 1D window along both axes.
inline Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
  const Index n = w.size();
  const Index oh = x.rows() - n + 1, ow = x.cols() - n + 1;
  Eigen::MatrixXd rows(oh, x.cols());
  for (Index i = 0; i < oh; ++i) rows.row(i) = w.transpose() * x.middleRows(i, n);
  Eigen::MatrixXd out(oh, ow);
  for (Index j = 0; j < ow; ++j) out.col(j) = rows.middleCols(j, n) * w;
  return out;
}

}  // namespace detail

/// Mean SSIM over fully-contained Gaussian windows (sigma 1.5), no border crop.
template <typename Scalar>
double ssim(const Image<Scalar>& a, const Image<Scalar>& b, Index window = 11, double data_range = 1.0) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("ssim: image shapes differ");
  if (a.rows() < window || a.cols() < window) throw ShapeError("ssim: image is smaller than the window");
  const Eigen::MatrixXd x = a.template cast<double>(), y = b.template cast<double>();
  const Eigen::VectorXd w = detail::gaussian_window(window, 1.5);
  const double c1 = std::pow(0.01 * data_range, 2), c2 = std::pow(0.03 * data_range, 2);
  const Eigen::ArrayXXd mx = detail::filter_valid(x, w).array();
  const Eigen::ArrayXXd my = detail::filter_valid(y, w).array();
  const Eigen::ArrayXXd sxx = detail::filter_valid(x.cwiseProduct(x), w).array() - mx.square();
  const Eigen::ArrayXXd syy = detail::filter_valid(y.cwiseProduct(y), w).array() - my.square();
  const Eigen::ArrayXXd sxy = detail::filter_valid(x.cwiseProduct(y), w).array() - mx * my;
  const Eigen::ArrayXXd map =
      ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx.square() + my.square() + c1) * (sxx + syy + c2));
  return map.mean();
}

template <typename Scalar>
Eigen::Vector2d center_of_mass(const Kernel<Scalar>& k) {
  Eigen::Vector2d com = Eigen::Vector2d::Zero();  // (row, col)
  double total = 0.0;
  for (Index i = 0; i < k.size(); ++i)
    for (Index j = 0; j < k.size(); ++j) {
      const double v = static_cast<double>(k(i, j));
      com += v * Eigen::Vector2d(static_cast<double>(i), static_cast<double>(j));
      total += v;
    }
  return com / total;
}

/// Zero-filled integer shift: out(i, j) = g(i - di, j - dj).
inline Eigen::MatrixXd shift_grid(const Eigen::MatrixXd& g, Index di, Index dj) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.rows(), g.cols());
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) {
      const Index si = i - di, sj = j - dj;
      if (si >= 0 && si < g.rows() && sj >= 0 && sj < g.cols()) out(i, j) = g(si, sj);
    }
  return out;
}

/// PSNR with peak max(k_true) after moving k_est by the rounded centre-of-mass offset.
template <typename Scalar>
double kernel_psnr(const Kernel<Scalar>& k_est, const Kernel<Scalar>& k_true) {
  if (k_est.size() != k_true.size()) throw ShapeError("kernel_psnr: kernel sizes differ");
  const Eigen::Vector2d offset = center_of_mass(k_true) - center_of_mass(k_est);
  const auto di = static_cast<Index>(std::lround(offset[0]));
  const auto dj = static_cast<Index>(std::lround(offset[1]));
  const Eigen::MatrixXd est = shift_grid(k_est.values().template cast<double>(), di, dj);
  const Eigen::MatrixXd truth = k_true.values().template cast<double>();
  const double mse = (est - truth).squaredNorm() / static_cast<double>(truth.size());
  return psnr_from_mse(mse, truth.maxCoeff());
}

struct MetricRecord {
  std::string id;
  int scale = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double kernel_psnr = 0.0;
};

struct MetricReport {
  std::vector<MetricRecord> records;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_kernel_psnr = 0.0;

  void finalize() {
    mean_psnr = mean_ssim = mean_kernel_psnr = 0.0;
    if (records.empty()) return;
    for (const auto& r : records) {
      mean_psnr += r.psnr;
      mean_ssim += r.ssim;
      mean_kernel_psnr += r.kernel_psnr;
    }
    const auto n = static_cast<double>(records.size());
    mean_psnr /= n;
    mean_ssim /= n;
    mean_kernel_psnr /= n;
  }
};

}  // namespace hacbsr
