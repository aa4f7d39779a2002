#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hacbsr/degradation.hpp"

namespace hacbsr {

/// Linearized surrogate: min_x ||y - A x||^2 + theta ||B (x - x_h)||^2.
struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd y;
  Eigen::VectorXd x_h;
  std::vector<double> theta_grid;

  void validate() const;
};

inline const std::vector<double>& default_theta_grid() {
  static const std::vector<double> grid{1e-2, 1e-1, 1.0, 10.0, 100.0};
  return grid;
}

inline constexpr double kStabilityTolerance = 1e-9;
inline constexpr double kPositiveDefiniteFloor = 1e-12;

Eigen::MatrixXd system_matrix(const LinearSystem& sys, double theta);

/// Solves (A^T A + theta B^T B) x = A^T y + theta B^T B x_h by Cholesky.
/// Throws ConditioningError when lambda_min(M) <= 1e-12.
Eigen::VectorXd solve_surrogate(const LinearSystem& sys, double theta);

double surrogate_objective(const LinearSystem& sys, double theta, const Eigen::VectorXd& x);

/// ||B M^{-1} A^T||_2.
double stability_constant(const LinearSystem& sys, double theta);

double spectral_norm(const Eigen::MatrixXd& m);
double lambda_min_symmetric(const Eigen::MatrixXd& m);

struct StabilityRecord {
  double theta = 0.0;
  double mu = 0.0;
  double c = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double bound_upper = 0.0;
  double weyl_lower = 0.0;
  std::optional<double> asymptotic_bound;  // absent when lambda_min(B^T B) is zero
  bool solved = false;
  bool consistency_ok = false;
  bool constant_bound_ok = false;
  bool weyl_ok = false;
  std::optional<bool> asymptotic_ok;
  bool monotone_ok = true;
  std::string note;
};

struct StabilityReport {
  std::vector<StabilityRecord> records;
  double norm_a = 0.0;
  double norm_b = 0.0;
  double lambda_min_btb = 0.0;
  double residual_at_history = 0.0;  // ||y - A x_h||
  bool monotonicity_checked = false;
  bool decay_checked = false;
  bool decay_ok = true;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
  std::string verdict() const;
};

StabilityReport verify_bounds(const LinearSystem& sys);

struct InstanceConfig {
  Index height = 16;
  Index width = 16;
  int scale = 2;
  Index feature_dim = 128;
  double noise_sigma = 0.01;
  bool consistent = false;  // y := A x_h
  std::vector<double> theta_grid = default_theta_grid();
};

/// Random instance: Gaussian kernel from the default sampling ranges, B from the
/// linear-random encoder, x_h and the ground truth uniform in [0, 1].
LinearSystem make_random_system(const InstanceConfig& cfg, std::uint64_t seed);

std::string stability_csv(const StabilityReport& report);

}  // namespace hacbsr
