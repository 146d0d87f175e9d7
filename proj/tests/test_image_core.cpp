#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "invreg/errors.hpp"
#include "invreg/gaussian.hpp"
#include "invreg/image.hpp"
#include "invreg/image_io.hpp"
#include "invreg/interpolation.hpp"
#include "invreg/metrics.hpp"
#include "test_support.hpp"

using namespace invreg;
using testing_support::random_image;

TEST_CASE("keys kernel interpolates and partitions unity") {
  CHECK(keys_kernel(0.0) == 1.0);
  for (double x : {-2.0, -1.0, 1.0, 2.0}) CHECK(keys_kernel(x) == 0.0);
  double worst = 0.0, worst_ramp = 0.0;
  for (int t = 0; t <= 1000; ++t) {
    const double x = t / 1000.0;
    double s = 0.0, r = 0.0;
    for (int k = -4; k <= 5; ++k) {
      s += keys_kernel(x - k);
      r += k * keys_kernel_deriv(x - k);
    }
    worst = std::max(worst, std::abs(s - 1.0));
    worst_ramp = std::max(worst_ramp, std::abs(r - 1.0));
  }
  CHECK(worst <= 1e-12);
  CHECK(worst_ramp <= 1e-12);
}

TEST_CASE("kernel derivative matches finite differences off the breakpoints") {
  for (double x : {-1.7, -1.2, -0.6, -0.1, 0.3, 0.8, 1.4, 1.9}) {
    const double fd = (keys_kernel(x + 1e-6) - keys_kernel(x - 1e-6)) / 2e-6;
    CHECK(keys_kernel_deriv(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("identity and integer-shift fields") {
  std::mt19937_64 rng(1);
  const Image y = random_image(9, 11, 2, rng);
  const Image same = interpolate(y, DeformationField::identity(9, 11));
  CHECK(same.data() == y.data());

  const Image shifted = interpolate(y, DeformationField::identity(9, 11).shifted(2, -3));
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 11; ++j) CHECK(shifted(i, j, k) == doctest::Approx(y.at(i + 2, j - 3, k)).epsilon(1e-15));
}

TEST_CASE("constant image stays constant under an in-bounds smooth field") {
  const Image one(40, 40, 1, 1.0);
  DeformationField f(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      f.t0[i * 20 + j] = 10 + i + 0.7 * std::sin(0.3 * j);
      f.t1[i * 20 + j] = 10 + j + 0.5 * std::cos(0.2 * i + 0.1);
    }
  const Image out = interpolate(one, f);
  for (double v : out.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jacobian of constants and ramps") {
  const Image c(12, 12, 1, 3.5);
  const auto jc = jacobian(c);
  for (int i = 2; i < 10; ++i)
    for (int j = 2; j < 10; ++j) {
      CHECK(std::abs(jc.d0(i, j)) < 1e-12);
      CHECK(std::abs(jc.d1(i, j)) < 1e-12);
    }
  Image ramp(12, 12, 1);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) ramp(i, j) = i;
  const auto jr = jacobian(ramp);
  for (int i = 2; i < 10; ++i)
    for (int j = 2; j < 10; ++j) {
      CHECK(jr.d0(i, j) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(jr.d1(i, j)) < 1e-12);
    }
}

TEST_CASE("interpolated jacobian matches finite differences of interpolate") {
  std::mt19937_64 rng(7);
  const Image y = random_image(16, 16, 2, rng);
  std::uniform_real_distribution<double> u(2.2, 12.8);
  DeformationField f(6, 6);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.t0[i] = u(rng);
    f.t1[i] = u(rng);
  }
  const auto w = interpolate_with_gradient(y, f);
  const double h = 1e-4;
  double worst = 0.0, scale = 0.0;
  for (double v : w.d0.data()) scale = std::max(scale, std::abs(v));
  for (int comp = 0; comp < 2; ++comp) {
    const Image fp = interpolate(y, comp == 0 ? f.shifted(h, 0) : f.shifted(0, h));
    const Image fm = interpolate(y, comp == 0 ? f.shifted(-h, 0) : f.shifted(0, -h));
    const Image& an = comp == 0 ? w.d0 : w.d1;
    for (std::size_t i = 0; i < an.size(); ++i) {
      const double fd = (fp.data()[i] - fm.data()[i]) / (2 * h);
      worst = std::max(worst, std::abs(fd - an.data()[i]) / std::max(1e-9, std::abs(an.data()[i])));
    }
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("gaussian filter sizing and samples") {
  const auto g1 = GaussianFilter::isotropic(1.0);
  CHECK(g1.side() == 7);
  CHECK(g1.center() == doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(GaussianFilter::isotropic(9.0).side() == 19);
  CHECK(GaussianFilter::isotropic(1e-2).is_impulse());

  // Lattice sum of the sampled density, independently evaluated.
  double s = 0.0;
  for (int a = -30; a <= 30; ++a)
    for (int b = -30; b <= 30; ++b) s += std::exp(-(a * a + b * b) / 8.0) / (8.0 * std::numbers::pi);
  CHECK(std::abs(s - 1.0) <= 1e-6);
  CHECK(std::abs(GaussianFilter::isotropic(4.0, 61).mass() - 1.0) <= 1e-6);
  // The 6-sigma support keeps all but the +-3 sigma tails.
  CHECK(GaussianFilter::isotropic(4.0).mass() > 0.995);

  Eigen::Matrix2d M;
  M << 4.0, 1.0, 1.0, 2.0;
  const GaussianFilter ga(M);
  CHECK(ga.side() == gaussian_side(std::sqrt((3.0 + std::sqrt(2.0)))));
  CHECK(ga.center() == doctest::Approx(1.0 / (2.0 * std::numbers::pi * std::sqrt(7.0))));
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(GaussianFilter{bad}, NumericDomainError);
}

TEST_CASE("convolution with a delta reproduces the filter") {
  for (bool aniso : {false, true}) {
    Eigen::Matrix2d M;
    M << 2.0, aniso ? 0.6 : 0.0, aniso ? 0.6 : 0.0, 2.0;
    const GaussianFilter g(M);
    Image d(21, 21, 1);
    d(10, 10) = 1.0;
    const Image out = convolve(d, g);
    const int h = g.half();
    for (int a = 0; a < g.side(); ++a)
      for (int b = 0; b < g.side(); ++b) CHECK(out(10 - h + a, 10 - h + b) == doctest::Approx(g(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("FFT and direct anisotropic convolution agree") {
  std::mt19937_64 rng(3);
  const Image x = random_image(30, 37, 2, rng);
  Eigen::Matrix2d M;
  M << 9.0, 2.0, 2.0, 5.0;
  const GaussianFilter g(M);
  REQUIRE(g.side() > 9);
  const Image out = convolve(x, g);
  const int h = g.half();
  for (int i : {0, 5, 17, 29})
    for (int j : {0, 9, 36}) {
      double s = 0.0;
      for (int a = -h; a <= h; ++a)
        for (int b = -h; b <= h; ++b) s += g(a + h, b + h) * x.at(i - a, j - b, 1);
      CHECK(out(i, j, 1) == doctest::Approx(s).epsilon(1e-10));
    }
}

TEST_CASE("convolution is shift equivariant away from the boundary") {
  std::mt19937_64 rng(4);
  Image x(40, 40, 1);
  const Image patch = random_image(10, 10, 1, rng);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) x(15 + i, 15 + j) = patch(i, j);
  const Image xs = x.placed(40, 40, 3, -2);
  const auto g = GaussianFilter::isotropic(2.0);
  const Image a = convolve(xs, g);
  const Image b = convolve(x, g).placed(40, 40, 3, -2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("gaussian semigroup on the interior") {
  std::mt19937_64 rng(5);
  const Image x = random_image(64, 64, 1, rng);
  for (auto [s1, s2] : {std::pair{1.0, 1.0}, std::pair{1.0, 4.0}, std::pair{2.25, 2.25}}) {
    // Wide supports isolate the convolution from truncation of the tails.
    auto wide = [](double v) { return GaussianFilter::isotropic(v, 2 * static_cast<int>(std::ceil(5 * std::sqrt(v))) + 1); };
    const Image lhs = convolve(convolve(x, wide(s1)), wide(s2));
    const Image rhs = convolve(x, wide(s1 + s2));
    double worst = 0.0;
    for (int i = 24; i < 40; ++i)
      for (int j = 24; j < 40; ++j) worst = std::max(worst, testing_support::rel_err(lhs(i, j), rhs(i, j)));
    CHECK(worst <= 1e-3);
    // With the default 6-sigma supports the discrepancy is the lost tail mass.
    const Image lhs6 = convolve(convolve(x, GaussianFilter::isotropic(s1)), GaussianFilter::isotropic(s2));
    const Image rhs6 = convolve(x, GaussianFilter::isotropic(s1 + s2));
    CHECK(testing_support::rel_err(lhs6(32, 32), rhs6(32, 32)) <= 1e-2);
  }
}

TEST_CASE("correlation metrics") {
  Image x(2, 2, 1), y(2, 2, 1);
  x(0, 0) = 1, x(0, 1) = 2, x(1, 0) = 3, x(1, 1) = 4;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) y(i, j) = 2 * x(i, j);
  CHECK(ncc(x, y) == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(9);
  const Image a = random_image(8, 9, 3, rng);
  CHECK(zncc(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  Image b = 2.5 * a;
  for (int k = 0; k < 3; ++k)
    for (double& v : b.plane(k)) v += 0.3 * k - 1.0;
  CHECK(zncc(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  for (int t = 0; t < 50; ++t) {
    const Image p = random_image(5, 6, 2, rng, -1, 1), q = random_image(5, 6, 2, rng, -1, 1);
    const double z = zncc(p, q), n = ncc(p, q);
    CHECK(z >= -1.0 - 1e-12);
    CHECK(z <= 1.0 + 1e-12);
    CHECK(n >= -1.0 - 1e-12);
    CHECK(n <= 1.0 + 1e-12);
  }
  const Image flat(4, 4, 1, 0.5);
  CHECK_THROWS_AS(zncc(flat, a.channel(0).placed(4, 4, 0, 0)), NumericDomainError);
  CHECK_THROWS_AS(ncc(Image(3, 3, 1), Image(3, 3, 1, 1.0)), NumericDomainError);
}

TEST_CASE("mask projection is idempotent and self-adjoint") {
  std::mt19937_64 rng(11);
  SupportMask m(10, 10);
  std::bernoulli_distribution coin(0.4);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) m.set(i, j, coin(rng));
  for (int t = 0; t < 10; ++t) {
    const Image x = random_image(10, 10, 2, rng, -1, 1), y = random_image(10, 10, 2, rng, -1, 1);
    CHECK(m.project(m.project(x)).data() == m.project(x).data());
    CHECK(dot(m.project(x), y) == doctest::Approx(dot(x, m.project(y))).epsilon(1e-13));
  }
}

TEST_CASE("dilation") {
  SupportMask m(9, 9);
  m.set(4, 4);
  CHECK(dilate(m, 0) == m);
  const SupportMask d = dilate(m, 1);
  CHECK(d.count() == 9);
  for (int i = 3; i <= 5; ++i)
    for (int j = 3; j <= 5; ++j) CHECK(d.contains(i, j));

  // Brute-force Chebyshev oracle on a lobed mask with radius 2 sigma, sigma = 3.
  SupportMask crab(60, 60);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j) {
      const double th = std::atan2(i - 30.0, j - 30.0);
      if (std::hypot(i - 30.0, j - 30.0) < 12 * (1 + 0.3 * std::sin(4 * th))) crab.set(i, j);
    }
  const SupportMask dc = dilate(crab, 6.0);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j) {
      bool expect = false;
      for (int a = -6; a <= 6 && !expect; ++a)
        for (int b = -6; b <= 6; ++b)
          if (crab.contains(i + a, j + b)) {
            expect = true;
            break;
          }
      CHECK(dc.contains(i, j) == expect);
      if (crab.contains(i, j)) CHECK(dc.contains(i, j));
    }
}

TEST_CASE("raw and png round trips") {
  std::mt19937_64 rng(2);
  const auto dir = std::filesystem::temp_directory_path();
  const Image x = random_image(5, 7, 3, rng);
  const std::string raw = (dir / "invreg_test_rt.raw").string();
  write_raw(raw, x);
  const Image r = read_raw(raw);
  REQUIRE(r.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.data()[i] == static_cast<double>(static_cast<float>(x.data()[i])));
  const std::string png = (dir / "invreg_test_rt.png").string();
  write_png(png, x);
  const Image p = read_png(png);
  REQUIRE(p.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(p.data()[i] - x.data()[i]) <= 0.5 / 255 + 1e-12);
  std::filesystem::remove(raw);
  std::filesystem::remove(png);
  CHECK_THROWS_AS(read_png((dir / "invreg_does_not_exist.png").string()), ConfigError);
}
