#include "support.hpp"

#include "hacbsr/kernel_sampling.hpp"

using namespace hacbsr;

namespace {

KernelD gk(double s1, double s2, double rho, Index size = 11) { return gaussian_kernel<double>({s1, s2, rho}, size); }

// Windowed SSIM with every statistic recomputed from scratch by explicit loops.
double ssim_oracle(const Image<double>& a, const Image<double>& b) {
  const Index n = a.rows(), w = std::min<Index>(7, n);
  const double range = std::max(a.maxCoeff(), b.maxCoeff());
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  double total = 0;
  int count = 0;
  for (Index i = 0; i + w <= n; ++i)
    for (Index j = 0; j + w <= n; ++j) {
      double ma = 0, mb = 0;
      for (Index p = 0; p < w; ++p)
        for (Index q = 0; q < w; ++q) {
          ma += a(i + p, j + q);
          mb += b(i + p, j + q);
        }
      ma /= w * w;
      mb /= w * w;
      double va = 0, vb = 0, cov = 0;
      for (Index p = 0; p < w; ++p)
        for (Index q = 0; q < w; ++q) {
          const double da = a(i + p, j + q) - ma, db = b(i + p, j + q) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= w * w;
      vb /= w * w;
      cov /= w * w;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_SUITE("kernel_sampling") {
  TEST_CASE("descriptor of a delta kernel") {
    const auto d = kernel_descriptor(KernelD::delta(5));
    CHECK(d[0] == 1.0);
    CHECK(d[1] == 0.0);
    CHECK(d[2] == 0.0);
    CHECK(d[3] == 0.0);
    CHECK(d[4] == 0.0);
    CHECK(d[5] == 0.0);
  }

  TEST_CASE("descriptor of a uniform kernel") {
    const auto d = kernel_descriptor(KernelD::uniform(3));
    CHECK(d[0] == doctest::Approx(1.0 / 9));
    CHECK(d[1] == doctest::Approx(std::log(9.0)));
    CHECK(d[2] == doctest::Approx(0.0));
    CHECK(d[3] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(d[4] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(d[5] == doctest::Approx(0.0));
  }

  TEST_CASE("descriptor moments follow the covariance") {
    // Widths well above one pixel, so grid sampling and 19-tap truncation barely move the moments.
    const auto d = kernel_descriptor(gk(1.5, 1.0, 0.5, 19));
    CHECK(d[3] == doctest::Approx(1.5).epsilon(1e-3));
    CHECK(d[4] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(d[5] == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(d[2] < 1e-12);
  }

  TEST_CASE("similarity of a kernel with itself is one") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
      const auto k = gaussian_kernel<double>(sample_covariance(rng, {0.7, 5}, {-0.8, 0.8}), 11);
      CHECK(similarity(k, k) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("similarity is symmetric and decreases with the shape gap") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
      const auto a = gaussian_kernel<double>(sample_covariance(rng, {0.7, 5}, {-0.8, 0.8}), 11);
      const auto b = gaussian_kernel<double>(sample_covariance(rng, {0.7, 5}, {-0.8, 0.8}), 11);
      CHECK(std::abs(similarity(a, b) - similarity(b, a)) < 1e-12);
    }
    const auto base = gk(1.0, 1.0, 0.0);
    CHECK(similarity(base, gk(1.2, 1.2, 0.0)) > similarity(base, gk(2.0, 2.0, 0.0)));
    CHECK(similarity(base, gk(2.0, 2.0, 0.0)) > similarity(base, gk(3.0, 0.8, 0.7)));
  }

  TEST_CASE("similarity equals its weighted components") {
    const auto a = gk(1.3, 0.9, 0.3), b = gk(2.2, 1.1, -0.4);
    const Eigen::ArrayXd x = vec(a.values()).array(), y = vec(b.values()).array();
    const double pearson = ((x - x.mean()) * (y - y.mean())).sum() /
                           std::sqrt((x - x.mean()).square().sum() * (y - y.mean()).square().sum());
    const auto da = kernel_descriptor(a), db = kernel_descriptor(b);
    const double cosine = da.dot(db) / (da.norm() * db.norm());
    const double ssim = ssim_oracle(a.values(), b.values());
    CHECK(kernel_pearson(a, b) == doctest::Approx(pearson).epsilon(1e-12));
    CHECK(kernel_ssim(a, b) == doctest::Approx(ssim).epsilon(1e-12));
    CHECK(similarity(a, b) ==
          doctest::Approx(0.5 * pearson + 0.2 * ssim + 0.3 * 0.5 * (1 + cosine)).epsilon(1e-12));
    SimilarityWeights only_feat{0.0, 0.0, 1.0};
    CHECK(similarity(a, b, only_feat) == doctest::Approx(0.5 * (1 + cosine)));
    CHECK_THROWS_AS(similarity(gk(1, 1, 0, 11), gk(1, 1, 0, 15)), ShapeError);
  }

  TEST_CASE("score from similarities") {
    const auto s = score_from_similarities({0.2, 0.9, 0.4});
    CHECK(s.s_avg == doctest::Approx(0.5));
    CHECK(s.s_min == 0.2);
    CHECK(s.s_max == 0.9);
    CHECK(s.j == doctest::Approx(-0.4));
    const auto empty = score_from_similarities({});
    CHECK(empty.j == 0.0);
    // Inside the band the literal objective rewards slack; the hinge variant does not.
    const auto inside = score_from_similarities({0.3, 0.35, 0.4});
    CHECK(inside.j == doctest::Approx(-0.05 + 0.4 + 0.0));
    ScoreThresholds hinge;
    hinge.hinge = true;
    CHECK(score_from_similarities({0.3, 0.35, 0.4}, hinge).j == doctest::Approx(-0.05));
  }

  TEST_CASE("single proposal is returned unchanged") {
    KernelHistory h;
    h.push(gk(1, 1, 0), 1.0);
    auto cfg = SamplingConfig::for_scale(2);
    cfg.n_proposals = 1;
    Rng a(5), b(5);
    const auto p = propose_kernel(h, a, cfg);
    const auto spec = sample_covariance(b, cfg.sigma_range, cfg.rho_range);
    CHECK(p.spec.sigma1 == spec.sigma1);
    CHECK(p.spec.rho == spec.rho);
    CHECK(h.size() == 2);
  }

  TEST_CASE("history of identical kernels steers away from that kernel") {
    KernelHistory h;
    const auto k1 = gk(1.0, 1.0, 0.0), k2 = gk(1.5, 1.2, 0.2);
    for (int i = 0; i < 20; ++i) h.push(k1, 1.0);
    const auto cfg = SamplingConfig::for_scale(2);
    const auto chosen = select_and_record(h, {{k1, {1, 1, 0}, {}}, {k2, {1.5, 1.2, 0.2}, {}}}, cfg);
    CHECK(chosen.spec.sigma1 == 1.5);
    CHECK(chosen.score.j > -0.2);
    CHECK(h.size() == 20);
    CHECK(h[19].kernel.values() == k2.values());
  }

  TEST_CASE("history is FIFO with fixed capacity") {
    KernelHistory h(3);
    for (int i = 1; i <= 5; ++i) h.push(gk(0.5 * i + 0.5, 1, 0), i);
    CHECK(h.size() == 3);
    CHECK(h[0].score == 3.0);
    CHECK(h[2].score == 5.0);
    CHECK_THROWS_AS(KernelHistory(0), ArgumentError);
  }

  TEST_CASE("batch of one and determinism") {
    auto cfg = SamplingConfig::for_scale(2);
    KernelHistory h1, h2;
    Rng a(9), b(9);
    CHECK(sample_batch(h1, a, 1, cfg).size() == 1);
    CHECK(h1.size() == 1);
    const auto x = sample_batch(h1, a, 5, cfg);
    sample_batch(h2, b, 1, cfg);
    const auto y = sample_batch(h2, b, 5, cfg);
    for (size_t i = 0; i < 5; ++i) CHECK(x[i].kernel.values() == y[i].kernel.values());
    const auto s1 = sample_schedule(4, 10, cfg), s2 = sample_schedule(4, 10, cfg);
    for (size_t i = 0; i < 10; ++i) CHECK(s1[i].spec.sigma1 == s2[i].spec.sigma1);
    CHECK_THROWS_AS(sample_batch(h1, a, 0, cfg), ArgumentError);
    cfg.n_proposals = 0;
    CHECK_THROWS_AS(propose_kernel(h1, a, cfg), ArgumentError);
  }

  TEST_CASE("shared seed schedule gives random sampling the leading candidate") {
    auto cfg = SamplingConfig::for_scale(2);
    auto one = cfg;
    one.n_proposals = 1;
    const auto r = sample_schedule(11, 8, one);
    for (int i = 0; i < 8; ++i) {
      Rng rng = stream_rng(11, 1000 + static_cast<std::uint64_t>(i));
      const auto spec = sample_covariance(rng, cfg.sigma_range, cfg.rho_range);
      CHECK(r[static_cast<size_t>(i)].spec.sigma2 == spec.sigma2);
    }
  }

  TEST_CASE("score does not depend on history order") {
    Rng rng(3);
    std::vector<KernelD> ks;
    for (int i = 0; i < 8; ++i) ks.push_back(gaussian_kernel<double>(sample_covariance(rng, {0.7, 5}, {-0.8, 0.8}), 11));
    const auto cand = gk(1.7, 1.1, 0.1);
    for (int t = 0; t < 5; ++t) {
      std::shuffle(ks.begin(), ks.end(), rng);
      KernelHistory a, b;
      for (const auto& k : ks) a.push(k, 0);
      for (auto it = ks.rbegin(); it != ks.rend(); ++it) b.push(*it, 0);
      CHECK(std::abs(candidate_score(cand, a).j - candidate_score(cand, b).j) < 1e-12);
    }
  }

  TEST_CASE("selected proposal maximises the score") {
    Rng rng(4);
    const auto cfg = SamplingConfig::for_scale(2);
    KernelHistory h;
    for (int i = 0; i < 6; ++i) h.push(gaussian_kernel<double>(sample_covariance(rng, cfg.sigma_range, cfg.rho_range), 11), 0);
    for (int t = 0; t < 10; ++t) {
      std::vector<Proposal> cands;
      for (int n = 0; n < 16; ++n) {
        const auto s = sample_covariance(rng, cfg.sigma_range, cfg.rho_range);
        cands.push_back({gaussian_kernel<double>(s, 11), s, {}});
      }
      double best = -1e300;
      for (const auto& c : cands) best = std::max(best, candidate_score(c.kernel, h, cfg.thresholds).j);
      const auto chosen = select_and_record(h, cands, cfg);
      CHECK(chosen.score.j == best);
    }
  }

  TEST_CASE("outlier rate on a synthetic cluster") {
    std::vector<Eigen::Matrix<double, 6, 1>> d(10, Eigen::Matrix<double, 6, 1>::Ones());
    d[9] *= 10.0;
    CHECK(descriptor_outlier_rate(d) == doctest::Approx(0.1));
    d.resize(9);
    CHECK(descriptor_outlier_rate(d) == 0.0);
    CHECK(descriptor_outlier_rate({}) == 0.0);
    CHECK(detail::median({3, 1, 2}) == 2.0);
    CHECK(detail::median({4, 1, 2, 3}) == 2.5);
    CHECK(detail::mad({1, 2, 3, 4, 100}, 3) == 1.0);
  }

  TEST_CASE("selection statistics") {
    auto cfg = SamplingConfig::for_scale(2);
    const auto picks = sample_schedule(2, 30, cfg);
    const auto st = selection_stats(picks);
    CHECK(st.count == 30);
    size_t exceed = 0;
    for (const auto& p : picks) exceed += p.score.s_max > 0.8;
    CHECK(st.s_max_exceed_rate == doctest::Approx(exceed / 30.0));
    CHECK(st.outlier_rate >= 0.0);
    CHECK(st.outlier_rate <= 1.0);
  }
}
