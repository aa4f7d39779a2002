#include "support.hpp"

#include "hacbsr/nn/adam.hpp"
#include "hacbsr/nn/encoder.hpp"
#include "hacbsr/nn/kernel_generator.hpp"
#include "hacbsr/nn/unet.hpp"

using namespace hacbsr;
using namespace hacbsr::nn;
using testing::random_image;
using testing::random_vector;

namespace {

double frob_dot(const Image<double>& a, const Image<double>& b) { return (a.array() * b.array()).sum(); }

}  // namespace

TEST_SUITE("networks") {
  TEST_CASE("im2col and col2im are adjoint") {
    Rng rng(1);
    for (auto [h, w] : {std::pair<Index, Index>{5, 7}, {8, 8}, {2, 3}}) {
      const Planes<double> x = random_image(3, h * w, rng, -1, 1);
      const Planes<double> y = random_image(27, h * w, rng, -1, 1);
      CHECK(std::abs(frob_dot(im2col3(x, h, w), y) - frob_dot(x, col2im3(y, 3, h, w))) < 1e-12);
    }
  }

  TEST_CASE("im2col reproduces a reflect-padded 3x3 convolution") {
    Rng rng(2);
    const Index h = 6, w = 5;
    const Planes<double> x = random_image(1, h * w, rng);
    const Planes<double> cols = im2col3(x, h, w);
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j)
        for (int di = 0; di < 3; ++di)
          for (int dj = 0; dj < 3; ++dj)
            CHECK(cols(3 * di + dj, i * w + j) ==
                  x(0, reflect_index(i + di - 1, h) * w + reflect_index(j + dj - 1, w)));
  }

  TEST_CASE("pooling and upsampling adjoints") {
    Rng rng(3);
    const Planes<double> x = random_image(2, 8 * 6, rng), g = random_image(2, 4 * 3, rng);
    CHECK(std::abs(frob_dot(avg_pool2(x, 8, 6), g) - frob_dot(x, avg_pool2_backward(g, 8, 6))) < 1e-12);
    const Planes<double> u = random_image(2, 4 * 3, rng), v = random_image(2, 8 * 6, rng);
    CHECK(std::abs(frob_dot(upsample_nearest2(u, 4, 3), v) - frob_dot(u, upsample_nearest2_backward(v, 4, 3))) <
          1e-12);
    CHECK((avg_pool2(upsample_nearest2(u, 4, 3), 8, 6) - u).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("U-Net parameter count") {
    const UNet<double> net;
    Index expected = 0;
    auto block = [](Index in, Index out) { return in * 9 * out + 2 * out; };
    expected += block(1, 32) + block(32, 32) + 2 * (block(32, 32) + block(32, 32));
    expected += 2 * (block(64, 32) + block(32, 32));
    expected += 32 + 1;
    CHECK(net.parameter_count() == expected);
    CHECK(expected == 102337);
    CHECK(net.divisor() == 4);
  }

  TEST_CASE("U-Net forward is deterministic and bounded") {
    const UNet<float> net({1, 8, 3});
    Rng a(4), b(4);
    const auto pa = net.init(a), pb = net.init(b);
    CHECK(pa == pb);
    Rng r(5);
    const auto z = make_image_noise<float>(1, 16, 20, r);
    const Image<float> x1 = net.forward(pa, z, 16, 20), x2 = net.forward(pa, z, 16, 20);
    CHECK(x1.rows() == 16);
    CHECK(x1.cols() == 20);
    CHECK(x1 == x2);
    CHECK(x1.minCoeff() > 0.0f);
    CHECK(x1.maxCoeff() < 1.0f);
    CHECK_THROWS_AS(net.forward(pa, z, 10, 32), ConfigurationError);
    CHECK_THROWS_AS(net.forward(Vector<float>(pa.head(10)), z, 16, 20), ConfigurationError);
    CHECK_THROWS_AS(UNet<float>({1, 0, 3}), ConfigurationError);
  }

  TEST_CASE("U-Net gradient matches finite differences") {
    const UNet<double> net({1, 4, 3});
    Rng rng(6);
    const Vector<double> params = net.init(rng);
    const auto z = make_image_noise<double>(1, 16, 16, rng);
    const Image<double> c = random_image(16, 16, rng, -1, 1);
    auto loss = [&](const Vector<double>& p) { return frob_dot(net.forward(p, z, 16, 16), c); };
    UNet<double>::Tape tape;
    net.forward(params, z, 16, 16, &tape);
    const Vector<double> grad = net.backward(params, tape, c);
    const auto check = testing::finite_difference_check(loss, params, grad, 60, 7, 1e-5);
    CHECK(check.indices.size() == 60);
    CHECK(check.worst_rel < 1e-4);
  }

  TEST_CASE("kernel generator outputs a distribution") {
    const KernelGenerator<float> gen({11, 64, 1000});
    CHECK(gen.parameter_count() == 1000 * 64 + 1000 + 121 * 1000 + 121);
    Rng rng(8);
    const auto p = gen.init(rng);
    const auto z = make_kernel_noise<float>(64, rng);
    const auto probs = gen.forward(p, z);
    CHECK(probs.minCoeff() >= 0.0f);
    CHECK(std::abs(probs.sum() - 1.0f) < 1e-5f);
    const auto k = gen.kernel(p, z);
    CHECK(k.size() == 11);
    CHECK(gen.forward(p, z) == probs);
    CHECK_THROWS_AS(gen.forward(p, Vector<float>(z.head(5))), ConfigurationError);
    CHECK_THROWS_AS(KernelGenerator<float>({4, 64, 10}), ConfigurationError);
  }

  TEST_CASE("kernel generator gradient matches finite differences") {
    const KernelGenerator<double> gen({5, 8, 30});
    Rng rng(9);
    const Vector<double> params = gen.init(rng);
    const Vector<double> z = random_vector(8, rng, 0, 1);
    const Vector<double> c = random_vector(25, rng);
    auto loss = [&](const Vector<double>& p) { return gen.forward(p, z).dot(c); };
    KernelGenerator<double>::Tape tape;
    gen.forward(params, z, &tape);
    const Vector<double> grad = gen.backward(params, z, tape, c);
    const auto check = testing::finite_difference_check(loss, params, grad, 80, 10, 1e-6);
    CHECK(check.indices.size() == 80);
    CHECK(check.worst_rel < 1e-5);
  }

  TEST_CASE("identity encoder") {
    Rng rng(11);
    const IdentityEncoder<double> e(20);
    const Image<double> x = random_image(4, 5, rng);
    CHECK(e.encode(x) == vec(x));
    CHECK(e.backward(e.encode(x), 4, 5) == x);
    CHECK_THROWS_AS(e.encode(Image<double>(Image<double>::Zero(3, 3))), ShapeError);
  }

  TEST_CASE("linear random encoder is linear with the documented spectrum") {
    const LinearRandomEncoder<double> e(32, 64, 12);
    CHECK(e.feature_dim() == 32);
    CHECK(e.input_size() == 64);
    Rng rng(13);
    const Image<double> x = random_image(8, 8, rng), y = random_image(8, 8, rng);
    const Vector<double> lhs = e.encode(Image<double>(2.0 * x - 0.5 * y));
    const Vector<double> rhs = 2.0 * e.encode(x) - 0.5 * e.encode(y);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(e.matrix());
    CHECK(e.sigma_min() == doctest::Approx(svd.singularValues().minCoeff()).epsilon(1e-8));
    CHECK(e.sigma_min() > 0.0);
    // Entries have variance 1/d, so E[|Bx|^2] = |x|^2.
    const double var = e.matrix().array().square().mean();
    CHECK(var == doctest::Approx(1.0 / 32).epsilon(0.1));
    const Vector<double> g = random_vector(32, rng);
    CHECK(std::abs(e.encode(x).dot(g) - frob_dot(x, e.backward(g, 8, 8))) < 1e-12);
    const LinearRandomEncoder<double> again(32, 64, 12);
    CHECK(again.matrix() == e.matrix());
    CHECK_THROWS_AS(LinearRandomEncoder<double>(0, 4, 1), ArgumentError);
    CHECK_THROWS_AS(make_encoder<double>("vgg", 4, 4, 1), ArgumentError);
  }

  TEST_CASE("wide encoder has a null space") {
    const LinearRandomEncoder<double> e(16, 64, 14);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(e.matrix());
    const Eigen::MatrixXd null = lu.kernel();
    CHECK(null.cols() == 48);
    const Vector<double> v = null.col(0).normalized();
    CHECK(e.encode(unvec(v, 8, 8)).norm() < 1e-12);
  }

  TEST_CASE("Adam follows the bias-corrected update") {
    Adam<double> opt(3);
    Vector<double> p(3), g1(3), g2(3);
    p << 1.0, -2.0, 0.5;
    g1 << 0.1, -0.3, 0.0;
    g2 << 0.2, 0.1, -1.0;
    Vector<double> q = p;
    opt.step(q, g1, 0.01);
    opt.step(q, g2, 0.01);
    for (int i = 0; i < 3; ++i) {
      const double m1 = 0.1 * g1[i], v1 = 0.001 * g1[i] * g1[i];
      double x = p[i] - 0.01 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
      const double m2 = 0.9 * m1 + 0.1 * g2[i], v2 = 0.999 * v1 + 0.001 * g2[i] * g2[i];
      const double c1 = 1 - 0.81, c2 = 1 - 0.999 * 0.999;
      x -= 0.01 * (m2 / c1) / (std::sqrt(v2 / c2) + 1e-8);
      CHECK(q[i] == doctest::Approx(x).epsilon(1e-12));
    }
    CHECK(opt.steps() == 2);
    Vector<double> wrong(2);
    CHECK_THROWS_AS(opt.step(wrong, g1, 0.1), ShapeError);
  }
}
