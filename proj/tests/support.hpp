#pragma once

#include <doctest.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hacbsr/core.hpp"
#include "hacbsr/degradation.hpp"

namespace testing {

using hacbsr::Image;
using hacbsr::Index;
using hacbsr::Vector;

inline Image<double> random_image(Index h, Index w, hacbsr::Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image<double> x(h, w);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

inline Vector<double> random_vector(Index n, hacbsr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector<double> v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

struct GradCheck {
  std::vector<Index> indices;
  std::vector<double> analytic;
  std::vector<double> numeric;
  double worst_rel = 0.0;
};

/// Central differences on `count` coordinates whose analytic gradient magnitude is at
/// least `floor_ratio` of the largest one; coordinates are visited in a seeded random order.
inline GradCheck finite_difference_check(const std::function<double(const Vector<double>&)>& f,
                                         const Vector<double>& x, const Vector<double>& grad, int count,
                                         std::uint64_t seed, double h = 1e-5, double floor_ratio = 1e-2) {
  GradCheck out;
  const double gmax = grad.cwiseAbs().maxCoeff();
  std::vector<Index> order(static_cast<size_t>(x.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (Index i : order) {
    if (static_cast<int>(out.indices.size()) == count) break;
    if (std::abs(grad[i]) < floor_ratio * gmax) continue;
    Vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (f(xp) - f(xm)) / (2.0 * h);
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-300});
    out.indices.push_back(i);
    out.analytic.push_back(grad[i]);
    out.numeric.push_back(fd);
    out.worst_rel = std::max(out.worst_rel, rel);
  }
  return out;
}

/// Fresh directory under the build tree's temp area, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("hacbsr_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testing
