#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "hacbsr/degradation.hpp"

namespace hacbsr {

using KernelD = Kernel<double>;

struct SimilarityWeights {
  double w_pearson = 0.5;
  double w_ssim = 0.2;
  double w_feat = 0.3;
};

struct ScoreThresholds {
  double tau_target = 0.3;
  double sigma_min = 0.3;
  double sigma_max = 0.8;
  bool hinge = false;
};

/// [max, entropy, |COM - centre|, sigma_x, sigma_y, rho_hat]
inline Eigen::Matrix<double, 6, 1> kernel_descriptor(const KernelD& k) {
  const auto& p = k.values();
  const Index n = k.size();
  const double c = static_cast<double>(k.radius());
  double entropy = 0.0, mx = 0.0, my = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double v = p(i, j);
      if (v > 0.0) entropy -= v * std::log(v);
      mx += v * static_cast<double>(j);
      my += v * static_cast<double>(i);
    }
  }
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double dx = static_cast<double>(j) - mx, dy = static_cast<double>(i) - my;
      vx += p(i, j) * dx * dx;
      vy += p(i, j) * dy * dy;
      cxy += p(i, j) * dx * dy;
    }
  }
  const double sx = std::sqrt(vx), sy = std::sqrt(vy);
  Eigen::Matrix<double, 6, 1> d;
  d << p.maxCoeff(), entropy, std::hypot(mx - c, my - c), sx, sy, (sx > 0.0 && sy > 0.0) ? cxy / (sx * sy) : 0.0;
  return d;
}

inline double kernel_pearson(const KernelD& a, const KernelD& b) {
  const Eigen::ArrayXd x = vec(a.values()).array(), y = vec(b.values()).array();
  const Eigen::ArrayXd xc = x - x.mean(), yc = y - y.mean();
  const double sxx = xc.square().sum(), syy = yc.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return (x == y).all() ? 1.0 : 0.0;
  return (xc * yc).sum() / std::sqrt(sxx * syy);
}

/// Mean SSIM over uniform min(7, K) windows; dynamic range is the larger kernel peak.
inline double kernel_ssim(const KernelD& a, const KernelD& b) {
  const Index n = a.size();
  const Index w = std::min<Index>(7, n);
  const double range = std::max(a.values().maxCoeff(), b.values().maxCoeff());
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  const double area = static_cast<double>(w * w);
  double total = 0.0;
  Index count = 0;
  for (Index i = 0; i + w <= n; ++i) {
    for (Index j = 0; j + w <= n; ++j) {
      const auto pa = a.values().block(i, j, w, w).array();
      const auto pb = b.values().block(i, j, w, w).array();
      const double ma = pa.sum() / area, mb = pb.sum() / area;
      const double va = (pa - ma).square().sum() / area;
      const double vb = (pb - mb).square().sum() / area;
      const double cov = ((pa - ma) * (pb - mb)).sum() / area;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline double descriptor_similarity(const KernelD& a, const KernelD& b) {
  const auto da = kernel_descriptor(a), db = kernel_descriptor(b);
  const double denom = da.norm() * db.norm();
  const double cosine = denom > 0.0 ? da.dot(db) / denom : 1.0;
  return 0.5 * (1.0 + cosine);
}

inline double similarity(const KernelD& a, const KernelD& b, const SimilarityWeights& w = {}) {
  if (a.size() != b.size()) throw ShapeError("similarity: kernel sizes differ");
  return w.w_pearson * kernel_pearson(a, b) + w.w_ssim * kernel_ssim(a, b) +
         w.w_feat * descriptor_similarity(a, b);
}

class KernelHistory {
 public:
  struct Entry {
    KernelD kernel;
    double score;
  };

  explicit KernelHistory(size_t capacity = 20) : capacity_(capacity) {
    if (capacity == 0) throw ArgumentError("history capacity must be positive");
  }

  void push(KernelD k, double score) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back({std::move(k), score});
  }

  size_t size() const { return entries_.size(); }
  size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const Entry& operator[](size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  size_t capacity_;
  std::deque<Entry> entries_;
};

struct ScoreBreakdown {
  double j = 0.0;
  double s_avg = 0.0;
  double s_min = 0.0;
  double s_max = 0.0;
};

inline ScoreBreakdown score_from_similarities(const std::vector<double>& sims, const ScoreThresholds& th = {}) {
  ScoreBreakdown r;
  if (sims.empty()) return r;
  double sum = 0.0;
  r.s_min = std::numeric_limits<double>::infinity();
  r.s_max = -std::numeric_limits<double>::infinity();
  for (double s : sims) {
    sum += s;
    r.s_min = std::min(r.s_min, s);
    r.s_max = std::max(r.s_max, s);
  }
  r.s_avg = sum / static_cast<double>(sims.size());
  double over = r.s_max - th.sigma_max, under = th.sigma_min - r.s_min;
  if (th.hinge) {
    over = std::max(over, 0.0);
    under = std::max(under, 0.0);
  }
  r.j = -std::abs(r.s_avg - th.tau_target) - over - under;
  return r;
}

inline ScoreBreakdown candidate_score(const KernelD& k, const KernelHistory& history,
                                      const ScoreThresholds& th = {}, const SimilarityWeights& w = {}) {
  std::vector<double> sims;
  sims.reserve(history.size());
  for (const auto& e : history) sims.push_back(similarity(k, e.kernel, w));
  return score_from_similarities(sims, th);
}

struct SamplingConfig {
  Index kernel_size = 11;
  Range sigma_range{0.7, 5.0};
  Range rho_range{-0.8, 0.8};
  Index n_proposals = 16;
  ScoreThresholds thresholds;
  SimilarityWeights weights;

  static SamplingConfig for_scale(int scale) {
    SamplingConfig c;
    c.kernel_size = default_kernel_size(scale);
    c.sigma_range = default_sigma_range(scale);
    return c;
  }
};

struct Proposal {
  KernelD kernel;
  CovarianceSpec spec;
  ScoreBreakdown score;
};

/// Selection step shared with callers that supply their own candidate set.
inline Proposal select_and_record(KernelHistory& history, std::vector<Proposal> candidates,
                                  const SamplingConfig& cfg) {
  if (candidates.empty()) throw ArgumentError("no candidates to select from");
  size_t best = 0;
  for (size_t n = 0; n < candidates.size(); ++n) {
    candidates[n].score = candidate_score(candidates[n].kernel, history, cfg.thresholds, cfg.weights);
    if (candidates[n].score.j > candidates[best].score.j) best = n;
  }
  Proposal chosen = std::move(candidates[best]);
  history.push(chosen.kernel, chosen.score.s_avg);
  return chosen;
}

/// Draws n candidates, keeps the first argmax of J and appends it to the history.
inline Proposal propose_kernel(KernelHistory& history, Rng& rng, const SamplingConfig& cfg) {
  if (cfg.n_proposals < 1) throw ArgumentError("n_proposals must be at least 1");
  std::vector<Proposal> candidates;
  candidates.reserve(static_cast<size_t>(cfg.n_proposals));
  for (Index n = 0; n < cfg.n_proposals; ++n) {
    const CovarianceSpec spec = sample_covariance(rng, cfg.sigma_range, cfg.rho_range);
    candidates.push_back({gaussian_kernel<double>(spec, cfg.kernel_size), spec, {}});
  }
  return select_and_record(history, std::move(candidates), cfg);
}

inline std::vector<Proposal> sample_batch(KernelHistory& history, Rng& rng, Index batch, const SamplingConfig& cfg) {
  if (batch < 1) throw ArgumentError("batch size must be at least 1");
  std::vector<Proposal> out;
  out.reserve(static_cast<size_t>(batch));
  for (Index t = 0; t < batch; ++t) out.push_back(propose_kernel(history, rng, cfg));
  return out;
}

/// Shared seed schedule: selection i draws its candidates from stream_rng(seed, 1000 + i),
/// so schedules that differ only in n_proposals see the same leading candidate at each step.
inline std::vector<Proposal> sample_schedule(std::uint64_t seed, int selections, const SamplingConfig& cfg,
                                             size_t capacity = 20) {
  if (selections < 1) throw ArgumentError("selection count must be at least 1");
  KernelHistory history(capacity);
  std::vector<Proposal> picks;
  picks.reserve(static_cast<size_t>(selections));
  for (int i = 0; i < selections; ++i) {
    Rng rng = stream_rng(seed, 1000 + static_cast<std::uint64_t>(i));
    picks.push_back(propose_kernel(history, rng, cfg));
  }
  return picks;
}

struct SelectionStats {
  size_t count = 0;
  double s_max_exceed_rate = 0.0;  // fraction of selections with S_max > sigma_max
  double outlier_rate = 0.0;       // fraction of descriptors beyond 2 MAD of the median distance
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

inline double mad(const std::vector<double>& v, double med) {
  std::vector<double> dev(v.size());
  for (size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  return median(std::move(dev));
}

}  // namespace detail

/// Descriptors are scaled per component by their MAD, then each selection's
/// distance to the component-wise median is compared against median + 2 MAD
/// of those distances.
inline double descriptor_outlier_rate(const std::vector<Eigen::Matrix<double, 6, 1>>& descriptors) {
  const size_t n = descriptors.size();
  if (n < 3) return 0.0;
  Eigen::Matrix<double, 6, 1> med, scale;
  for (int c = 0; c < 6; ++c) {
    std::vector<double> col(n);
    for (size_t i = 0; i < n; ++i) col[i] = descriptors[i][c];
    med[c] = detail::median(col);
    const double m = detail::mad(col, med[c]);
    scale[c] = m > 1e-12 ? m : 1.0;
  }
  std::vector<double> dist(n);
  for (size_t i = 0; i < n; ++i) dist[i] = ((descriptors[i] - med).cwiseQuotient(scale)).norm();
  const double dm = detail::median(dist);
  const double limit = dm + 2.0 * detail::mad(dist, dm);
  size_t out = 0;
  for (double d : dist)
    if (d > limit) ++out;
  return static_cast<double>(out) / static_cast<double>(n);
}

inline SelectionStats selection_stats(const std::vector<Proposal>& picks, const ScoreThresholds& th = {}) {
  SelectionStats s;
  s.count = picks.size();
  if (picks.empty()) return s;
  std::vector<Eigen::Matrix<double, 6, 1>> desc;
  desc.reserve(picks.size());
  size_t exceed = 0;
  for (const auto& p : picks) {
    if (p.score.s_max > th.sigma_max) ++exceed;
    desc.push_back(kernel_descriptor(p.kernel));
  }
  s.s_max_exceed_rate = static_cast<double>(exceed) / static_cast<double>(picks.size());
  s.outlier_rate = descriptor_outlier_rate(desc);
  return s;
}

}  // namespace hacbsr
