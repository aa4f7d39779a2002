#include "support.hpp"

#include "hacbsr/dataset.hpp"
#include "hacbsr/image_io.hpp"

using namespace hacbsr;
using testing::random_image;

namespace {

// Gaussian density written out with the closed-form 2x2 inverse.
double gaussian_density(double dx, double dy, double s1, double s2, double rho) {
  const double det = s1 * s1 * s2 * s2 * (1 - rho * rho);
  const double a = s2 * s2 / det, b = -rho * s1 * s2 / det, d = s1 * s1 / det;
  return std::exp(-0.5 * (a * dx * dx + 2 * b * dx * dy + d * dy * dy));
}

Image<double> gaussian_oracle(double s1, double s2, double rho, Index k) {
  Image<double> g(k, k);
  const double c = (k - 1) / 2.0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) g(i, j) = gaussian_density(j - c, i - c, s1, s2, rho);
  return g / g.sum();
}

// Explicit padded-array convolution: pad by mirroring, flip the kernel, subsample at offset 0.
Image<double> brute_force_degrade(const Image<double>& x, const Image<double>& k, int s) {
  const Index h = x.rows(), w = x.cols(), ks = k.rows(), c = ks / 2;
  auto mirror = [](Index i, Index n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image<double> padded(h + 2 * c, w + 2 * c);
  for (Index i = 0; i < padded.rows(); ++i)
    for (Index j = 0; j < padded.cols(); ++j) padded(i, j) = x(mirror(i - c, h), mirror(j - c, w));
  Image<double> full(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      double acc = 0;
      for (Index a = 0; a < ks; ++a)
        for (Index b = 0; b < ks; ++b) acc += k(ks - 1 - a, ks - 1 - b) * padded(i + a, j + b);
      full(i, j) = acc;
    }
  Image<double> out(h / s, w / s);
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = full(i * s, j * s);
  return out;
}

Kernel<double> random_kernel(Rng& rng, int scale) {
  return gaussian_kernel<double>(sample_covariance(rng, default_sigma_range(scale), default_rho_range()),
                                 default_kernel_size(scale));
}

}  // namespace

TEST_SUITE("degradation") {
  TEST_CASE("kernel invariants are enforced at construction") {
    CHECK_THROWS_AS(Kernel<double>(Image<double>::Constant(3, 5, 1.0 / 15)), ShapeError);
    CHECK_THROWS_AS(Kernel<double>(Image<double>::Constant(4, 4, 1.0 / 16)), ArgumentError);
    Image<double> neg = Image<double>::Constant(3, 3, 1.0 / 8);
    neg(0, 0) = -1.0 / 8;
    neg(1, 1) = 2.0 / 8;
    CHECK_THROWS_AS(Kernel<double>{neg}, DomainError);
    CHECK_THROWS_AS(Kernel<double>(Image<double>::Constant(3, 3, 0.2)), DomainError);
    CHECK_NOTHROW(Kernel<double>(Image<double>::Constant(3, 3, 1.0 / 9)));
    CHECK(Kernel<double>::delta(5)(2, 2) == 1.0);
    CHECK(default_kernel_size(2) == 11);
    CHECK(default_kernel_size(3) == 15);
    CHECK(default_kernel_size(4) == 19);
  }

  TEST_CASE("covariance spec validation") {
    CHECK(CovarianceSpec{1, 2, 0.5}.valid());
    CHECK_THROWS_AS(CovarianceSpec({0, 1, 0}).validate(), DomainError);
    CHECK_THROWS_AS(CovarianceSpec({1, 1, 1.0}).validate(), DomainError);
    CHECK_THROWS_AS(CovarianceSpec({1, -1, 0}).validate(), DomainError);
  }

  TEST_CASE("isotropic gaussian is symmetric with a central peak") {
    const auto k = gaussian_kernel<double>({1.0, 1.0, 0.0}, 5);
    const auto& g = k.values();
    CHECK(g.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((g - g.rowwise().reverse().eval()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((g - g.colwise().reverse().eval()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((g - Image<double>(g.transpose())).cwiseAbs().maxCoeff() < 1e-15);
    Index r, c;
    g.maxCoeff(&r, &c);
    CHECK(r == 2);
    CHECK(c == 2);
  }

  TEST_CASE("correlated gaussian is elongated along the main diagonal") {
    const auto k = gaussian_kernel<double>({1.0, 1.0, 0.9}, 11);
    const Image<double> oracle = gaussian_oracle(1.0, 1.0, 0.9, 11);
    CHECK((k.values() - oracle).cwiseAbs().maxCoeff() < 1e-14);
    Index r, c;
    k.values().maxCoeff(&r, &c);
    CHECK(r == 5);
    CHECK(c == 5);
    double diag = 0, anti = 0;
    for (Index i = 0; i < 11; ++i)
      for (Index j = 0; j < 11; ++j) {
        if (std::abs(i - j) <= 1) diag += k(i, j);
        if (std::abs(i + j - 10) <= 1) anti += k(i, j);
      }
    CHECK(diag > anti);
  }

  TEST_CASE("anisotropic gaussian matches the closed-form oracle") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const auto spec = sample_covariance(rng, {0.7, 5.0}, {-0.8, 0.8});
      const auto k = gaussian_kernel<double>(spec, 11);
      CHECK((k.values() - gaussian_oracle(spec.sigma1, spec.sigma2, spec.rho, 11)).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("wide gaussian approaches the uniform kernel") {
    const auto k = gaussian_kernel<double>({100.0, 100.0, 0.0}, 5);
    CHECK((k.values().array() - 1.0 / 25).abs().maxCoeff() < 1e-2);
  }

  TEST_CASE("gaussian_kernel argument errors") {
    CHECK_THROWS_AS(gaussian_kernel<double>({1, 1, 0}, 4), ArgumentError);
    CHECK_THROWS_AS(gaussian_kernel<double>({1, 1, 1.0}, 5), DomainError);
    CHECK_THROWS_AS(gaussian_kernel<double>({-1, 1, 0}, 5), DomainError);
  }

  TEST_CASE("axis swap symmetry") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
      const auto s = sample_covariance(rng, default_sigma_range(3), default_rho_range());
      const auto a = gaussian_kernel<double>(s, 15);
      const auto b = gaussian_kernel<double>({s.sigma2, s.sigma1, s.rho}, 15);
      CHECK((a.transposed().values() - b.values()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("sample_covariance ranges") {
    Rng rng(1);
    const auto fixed = sample_covariance(rng, {2, 2}, {0, 0});
    CHECK(fixed.sigma1 == 2.0);
    CHECK(fixed.sigma2 == 2.0);
    CHECK(fixed.rho == 0.0);
    double mean = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto s = sample_covariance(rng, {0.7, 5.0}, {-0.8, 0.8});
      CHECK(s.sigma1 >= 0.7);
      CHECK(s.sigma1 <= 5.0);
      CHECK(std::abs(s.rho) <= 0.8);
      mean += s.sigma1;
    }
    CHECK(std::abs(mean / 10000 - 2.85) < 0.05);
    CHECK_THROWS_AS(sample_covariance(rng, {3, 2}, {0, 0}), ArgumentError);
    CHECK_THROWS_AS(sample_covariance(rng, {0, 2}, {0, 0}), ArgumentError);
    CHECK_THROWS_AS(sample_covariance(rng, {1, 2}, {0.5, 0.1}), ArgumentError);
    CHECK_THROWS_AS(sample_covariance(rng, {1, 2}, {-1.0, 0.1}), ArgumentError);
  }

  TEST_CASE("reflect index follows mirror padding without edge repeat") {
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(-2, 5) == 2);
    CHECK(reflect_index(5, 5) == 3);
    CHECK(reflect_index(6, 5) == 2);
    CHECK(reflect_index(-9, 5) == 1);
    CHECK(reflect_index(3, 1) == 0);
  }

  TEST_CASE("constant image is a fixed point of degradation") {
    Rng rng(2);
    const auto k = random_kernel(rng, 2);
    const Image<double> x = Image<double>::Constant(16, 16, 0.5);
    const Image<double> y = degrade(x, k, 2, 0.0, rng);
    CHECK(y.rows() == 8);
    CHECK(y.cols() == 8);
    CHECK((y.array() - 0.5).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("delta image reproduces the kernel") {
    Rng rng(4);
    const auto k = gaussian_kernel<double>({1.3, 0.8, 0.6}, 5);
    Image<double> x = Image<double>::Zero(11, 11);
    x(5, 5) = 1.0;
    const Image<double> y = degrade(x, k, 1, 0.0, rng);
    CHECK((y.block(3, 3, 5, 5) - k.values()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(y.sum() - 1.0) < 1e-12);
  }

  TEST_CASE("ramp through a box kernel matches the brute-force oracle") {
    Image<double> x(8, 8);
    for (Index i = 0; i < 8; ++i)
      for (Index j = 0; j < 8; ++j) x(i, j) = 0.1 * i + 0.03 * j;
    const Kernel<double> box = Kernel<double>::uniform(3);
    const Image<double> y = degrade_noiseless(x, box, 2);
    CHECK((y - brute_force_degrade(x, box.values(), 2)).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("asymmetric kernels match the brute-force oracle") {
    Rng rng(5);
    for (int s : {1, 2, 3}) {
      Image<double> kv = random_image(5, 5, rng);
      const Kernel<double> k = Kernel<double>::normalized(kv);
      const Image<double> x = random_image(12, 12, rng);
      CHECK((degrade_noiseless(x, k, s) - brute_force_degrade(x, k.values(), s)).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("degradation is linear") {
    Rng rng(6);
    const auto k = random_kernel(rng, 2);
    const Image<double> x1 = random_image(16, 16, rng, -1, 2), x2 = random_image(16, 16, rng, -1, 2);
    const double a = 0.7, b = -1.3;
    const Image<double> lhs = degrade_noiseless(Image<double>(a * x1 + b * x2), k, 2);
    const Image<double> rhs = a * degrade_noiseless(x1, k, 2) + b * degrade_noiseless(x2, k, 2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("shape errors") {
    Rng rng(7);
    const auto k = Kernel<double>::uniform(3);
    CHECK_THROWS_AS(degrade_noiseless(Image<double>(Image<double>::Zero(15, 16)), k, 2), ShapeError);
    CHECK_THROWS_AS(degrade_noiseless(Image<double>(Image<double>::Zero(2, 2)), k, 2), ShapeError);
    CHECK_THROWS_AS(degrade_adjoint(Image<double>(Image<double>::Zero(3, 3)), k, 2, 8, 8), ShapeError);
    DegradationSpec<double> spec{k, 5, 0.0};
    CHECK_THROWS_AS(degrade(Image<double>(Image<double>::Zero(20, 20)), spec, rng), ArgumentError);
  }

  TEST_CASE("delta kernel at unit scale gives the identity matrix") {
    const Matrix<double> a = degradation_matrix(Kernel<double>::delta(3), 1, 6, 6);
    CHECK(a.isApprox(Matrix<double>::Identity(36, 36)));
  }

  TEST_CASE("degradation matrix agrees with degrade on random inputs") {
    Rng rng(8);
    const auto k = random_kernel(rng, 2);
    const Matrix<double> a = degradation_matrix(k, 2, 16, 16);
    CHECK(a.rows() == 64);
    CHECK(a.cols() == 256);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      const Image<double> x = random_image(16, 16, rng);
      const Vector<double> ax = a * vec(x);
      worst = std::max(worst, (ax - vec(degrade_noiseless(x, k, 2)).eval()).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("adjoint identity and adjoint operator") {
    Rng rng(9);
    for (int s : {2, 3}) {
      const auto k = random_kernel(rng, s);
      const Index n = 6 * s * 3;
      const Matrix<double> a = degradation_matrix(k, s, n / 3, n / 3);
      const Image<double> x = random_image(n / 3, n / 3, rng);
      const Image<double> u = random_image(n / 3 / s, n / 3 / s, rng);
      const double lhs = (a * vec(x)).dot(vec(u));
      const double rhs = vec(x).dot(a.transpose() * vec(u));
      CHECK(std::abs(lhs - rhs) < 1e-9);
      const Image<double> adj = degrade_adjoint(u, k, s, n / 3, n / 3);
      CHECK((vec(adj) - a.transpose() * vec(u)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("kernel gradient is the exact derivative of the bilinear form") {
    Rng rng(10);
    const Image<double> x = random_image(16, 16, rng);
    const Image<double> r = random_image(8, 8, rng, -1, 1);
    const Image<double> g = kernel_gradient(x, r, 2, 5);
    for (Index a = 0; a < 5; ++a)
      for (Index b = 0; b < 5; ++b) {
        // degrade is linear in k, so the (a, b) coordinate is <r, degrade(x, e_ab)>.
        Image<double> e = Image<double>::Zero(5, 5);
        e(a, b) = 1.0;
        const double direct = (r.array() * brute_force_degrade(x, e, 2).array()).sum();
        CHECK(std::abs(g(a, b) - direct) < 1e-12);
      }
  }

  TEST_CASE("dense guard") {
    CHECK_THROWS_AS(degradation_matrix(Kernel<double>::uniform(3), 2, 66, 66), CapacityError);
    CHECK_NOTHROW(degradation_matrix(Kernel<double>::uniform(3), 2, 64, 64));
  }

  TEST_CASE("additive noise has the requested standard deviation") {
    Rng rng(12);
    const Image<double> x = Image<double>::Constant(128, 128, 0.5);
    const auto k = Kernel<double>::uniform(3);
    const Image<double> y = degrade(x, k, 2, 0.05, rng);
    const Eigen::ArrayXd d = (y.array() - 0.5).reshaped();
    const double sd = std::sqrt((d - d.mean()).square().mean());
    CHECK(std::abs(sd - 0.05) < 0.003);
  }

  TEST_CASE("bicubic resampling") {
    Rng rng(13);
    const Image<double> c = Image<double>::Constant(6, 7, 0.3);
    CHECK((upsample_bicubic(c, 3).array() - 0.3).abs().maxCoeff() < 1e-12);
    const Image<double> x = random_image(9, 9, rng);
    CHECK((resize_bicubic(x, 9, 9) - x).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(detail::cubic_weight(0) == 1.0);
    CHECK(detail::cubic_weight(1) == 0.0);
    CHECK(detail::cubic_weight(2) == 0.0);
    const Eigen::MatrixXd op = detail::bicubic_operator(8, 16);
    CHECK((op.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    const auto k = Kernel<double>::uniform(3);
    const Image<double> y = degrade(Image<double>(Image<double>::Constant(16, 16, 0.25)), k, 2, 0.0, rng,
                                    DownsampleMode::Bicubic);
    CHECK((y.array() - 0.25).abs().maxCoeff() < 1e-12);
  }
}

TEST_SUITE("degradation") {
  TEST_CASE("terrain images are deterministic and in range") {
    Rng a = stream_rng(3, 1), b = stream_rng(3, 1);
    const Image<double> x = terrain_image(64, a), y = terrain_image(64, b);
    CHECK(x == y);
    CHECK(x.minCoeff() >= 0.05 - 1e-12);
    CHECK(x.maxCoeff() <= 0.95 + 1e-12);
    CHECK(x.maxCoeff() - x.minCoeff() > 0.5);
  }

  TEST_CASE("periodic blur preserves the mean") {
    Rng rng(14);
    const Image<double> x = random_image(32, 32, rng);
    const Image<double> b = periodic_gaussian_blur(x, 2.0);
    CHECK(std::abs(b.mean() - x.mean()) < 1e-12);
    CHECK(b.maxCoeff() - b.minCoeff() < x.maxCoeff() - x.minCoeff());
  }

  TEST_CASE("synthetic pairs are consistent with the degradation operator") {
    const auto p = synthesize_pair(32, 2, 0.0, 5, 1);
    CHECK(p.lr.rows() == 16);
    CHECK((p.lr - degrade_noiseless(p.hr, p.kernel, 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.kernel.values() - gaussian_kernel<double>(p.spec, 11).values()).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("dataset synthesis is byte-deterministic and round-trips") {
    testing::TempDir a("synth_a"), b("synth_b");
    DatasetConfig cfg;
    cfg.n_images = 2;
    cfg.hr_size = 64;
    cfg.scales = {2};
    cfg.seed = 7;
    const auto m = synthesize_dataset(cfg, a.path());
    synthesize_dataset(cfg, b.path());
    CHECK(m.records.size() == 2);
    for (const auto& e : std::filesystem::directory_iterator(a.path())) {
      const auto name = e.path().filename().string();
      CHECK_MESSAGE(testing::file_bytes(e.path()) == testing::file_bytes(b / name), name);
    }
    const auto back = read_manifest(a / "manifest.json");
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[1].id == m.records[1].id);
    CHECK(back.records[1].spec.sigma1 == m.records[1].spec.sigma1);
    for (const auto& r : back.records) {
      const auto k = read_kernel_csv(a / r.kernel_path);
      CHECK(std::abs(k.values().sum() - 1.0) < 1e-6);
      CHECK(k.values().minCoeff() >= 0.0);
      CHECK(k.size() == r.kernel_size);
    }
  }

  TEST_CASE("manifest count is images times scales") {
    testing::TempDir d("synth_scales");
    DatasetConfig cfg;
    cfg.n_images = 5;
    cfg.hr_size = 48;
    cfg.scales = {2, 3, 4};
    cfg.noise_sigma = 0.01;
    cfg.seed = 1;
    const auto m = synthesize_dataset(cfg, d.path());
    CHECK(m.records.size() == 15);
    int lr = 0;
    for (const auto& e : std::filesystem::directory_iterator(d.path()))
      if (e.path().filename().string().find("_lr.png") != std::string::npos) ++lr;
    CHECK(lr == 15);
  }

  TEST_CASE("dataset I/O errors carry the path") {
    testing::TempDir d("synth_io");
    write_text(d / "blocker", "x");
    DatasetConfig cfg;
    cfg.hr_size = 32;
    try {
      synthesize_dataset(cfg, d / "blocker");
      FAIL("expected an I/O error");
    } catch (const IoError& e) {
      CHECK(e.path().find("blocker") != std::string::npos);
    }
    CHECK_THROWS_AS(manifest_from_json("{\"records\": 3}"), ArgumentError);
    CHECK_THROWS_AS(parse_mode("nearest"), ArgumentError);
    CHECK(mode_name(parse_mode("bicubic")) == "bicubic");
  }

  TEST_CASE("PNG and kernel CSV round trips") {
    testing::TempDir d("io");
    Rng rng(15);
    const Image<double> x = random_image(13, 17, rng);
    write_png(d / "a16.png", x, 16);
    write_png(d / "a8.png", x, 8);
    CHECK((read_png(d / "a16.png") - x).cwiseAbs().maxCoeff() <= 0.5 / 65535 + 1e-12);
    CHECK((read_png(d / "a8.png") - x).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
    Image<double> out_of_range = x;
    out_of_range(0, 0) = 1.7;
    out_of_range(1, 1) = -0.2;
    write_png(d / "clamped.png", out_of_range, 8);
    const Image<double> clamped = read_png(d / "clamped.png");
    CHECK(clamped(0, 0) == 1.0);
    CHECK(clamped(1, 1) == 0.0);
    const auto k = gaussian_kernel<double>({1.7, 0.9, -0.3}, 11);
    write_kernel_csv(d / "k.csv", k.values());
    CHECK(read_kernel_csv(d / "k.csv").values() == k.values());
    CHECK_THROWS_AS(read_png(d / "missing.png"), IoError);
    write_text(d / "bad.png", "not a png");
    CHECK_THROWS_AS(read_png(d / "bad.png"), IoError);
    write_text(d / "bad.csv", "1,2\n3\n");
    CHECK_THROWS_AS(read_kernel_csv(d / "bad.csv"), IoError);
    CHECK_THROWS_AS(write_png(d / "x.png", x, 12), ArgumentError);
  }
}
