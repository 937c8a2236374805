#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mslddmm/scale_kernels.hpp"
#include "oracles.hpp"

using namespace mslddmm;

namespace {

ScaleLadder paper_ladder() { return ScaleLadder::stepped(0.1, 1, 20); }

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

std::function<double(double)> piecewise_width(const ScaleLadder& l) {
  return [l](double mu) { return l.node(l.interval_of(mu)); };
}

std::vector<double> interior_nodes(const ScaleLadder& l) {
  std::vector<double> out;
  for (int k = 1; k + 1 < l.node_count(); ++k) out.push_back(l.node(k));
  return out;
}

}  // namespace

TEST_CASE("ladder nodes follow r_n = n / 10") {
  const ScaleLadder l = paper_ladder();
  CHECK(l.node_count() == 20);
  CHECK(l.s1() == doctest::Approx(0.1));
  CHECK(l.s2() == doctest::Approx(2.0));
  for (int k = 0; k + 1 < l.node_count(); ++k) CHECK(l.width(k) > 0.0);
  CHECK(l.interval_of(l.s2()) == l.intervals() - 1);
  CHECK(l.interval_of(0.15) == 0);
  CHECK(l.node_index(1.0).value() == 9);
  CHECK_FALSE(l.node_index(1.05).has_value());
  CHECK_THROWS_AS(l.clamp(2.5), std::domain_error);
  CHECK_THROWS_AS(ScaleLadder({0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ScaleLadder({0.5, 0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("Gaussian scale integral: trivial and error cases") {
  const GaussianScaleFamily fam{paper_ladder(), 2, ScaleProfile::Continuous};
  CHECK(gauss_scale_integral(fam, 0.5, 0.5, 1.3) == 0.0);
  CHECK_THROWS_AS(gauss_scale_integral(fam, 0.8, 0.5, 1.0), std::domain_error);
  // r = 0: the integrand is 1.
  CHECK(gauss_scale_integral(fam, 0.3, 1.7, 0.0) == doctest::Approx(1.4).epsilon(1e-15));
}

TEST_CASE("Gaussian scale integral matches adaptive quadrature") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(0.1, 2.0), dist(0.0, 4.0);
  for (int i = 0; i < 200; ++i) {
    double a = scale(rng), b = scale(rng);
    if (a > b) std::swap(a, b);
    const double r = dist(rng);
    const RadialSample s = integrate_gaussian_scales(a, b, r);
    const double ref = oracle::gauss_scale_integral(a, b, r);
    CHECK(std::abs(s.value - ref) <= 1e-10 * std::max(std::abs(ref), 1e-3));
    // Slope is d/dc with c = r^2 / 2.
    const double c = 0.5 * r * r, h = 1e-6 * std::max(c, 1e-3);
    const double up = oracle::gauss_scale_integral(a, b, std::sqrt(2.0 * (c + h)));
    const double dn = oracle::gauss_scale_integral(a, b, std::sqrt(2.0 * std::max(c - h, 0.0)));
    const double fd = (up - dn) / ((c + h) - std::max(c - h, 0.0));
    CHECK(std::abs(s.slope - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
  }
}

TEST_CASE("piecewise scale integral is the interval sum") {
  const ScaleLadder l = paper_ladder();
  const GaussianScaleFamily fam{l, 2, ScaleProfile::PiecewiseConstant};
  // Hand case inside one interval [0.3, 0.4): width 0.3.
  CHECK(piecewise_scale_integral(fam, 0.32, 0.37, 0.5) ==
        doctest::Approx(0.05 * std::exp(-0.25 / (2 * 0.09))).epsilon(1e-14));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(0.1, 2.0), dist(0.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    double a = scale(rng), b = scale(rng);
    if (a > b) std::swap(a, b);
    const double r = dist(rng);
    const auto w = piecewise_width(l);
    const double ref = oracle::piecewise_simpson(
        [&](double mu) { return std::exp(-r * r / (2 * w(mu) * w(mu))); }, a, b, interior_nodes(l));
    CHECK(rel(piecewise_scale_integral(fam, a, b, r), ref) <= 1e-10);
  }
}

TEST_CASE("Dirac kernel matches its defining integral") {
  const ScaleLadder l = paper_ladder();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.1, 2.0), dist(0.0, 3.0), weight(0.5, 2.0);
  for (ScaleProfile profile : {ScaleProfile::Continuous, ScaleProfile::PiecewiseConstant}) {
    const GaussianScaleFamily fam{l, 2, profile};
    const auto width = profile == ScaleProfile::Continuous ? std::function<double(double)>([](double mu) { return mu; })
                                                           : piecewise_width(l);
    const std::vector<double> breaks = profile == ScaleProfile::Continuous ? std::vector<double>{} : interior_nodes(l);
    for (int i = 0; i < 40; ++i) {
      const DiracMeasure m{scale(rng), weight(rng)};
      const double lam = scale(rng), lam0 = scale(rng), r = dist(rng);
      const double got = dirac_kernel(ScaleMeasure{m}, fam, lam, lam0, r);
      const double ref = oracle::dirac_kernel(width, breaks, m.s0, m.sigma, lam, lam0, r);
      CHECK(rel(got, ref) <= 1e-10);
    }
  }
}

TEST_CASE("Dirac kernel extreme atoms reduce to one-sided integrals") {
  const ScaleLadder l = paper_ladder();
  const GaussianScaleFamily fam{l, 2, ScaleProfile::Continuous};
  const double r = 0.7, lam = 0.6, lam0 = 1.3;
  const double at_s2 = dirac_kernel(ScaleMeasure{DiracMeasure{2.0, 1.0}}, fam, lam, lam0, r);
  CHECK(rel(at_s2, std::exp(-r * r / 8.0) + oracle::gauss_scale_integral(std::max(lam, lam0), 2.0, r)) <= 1e-12);
  const double at_s1 = dirac_kernel(ScaleMeasure{DiracMeasure{0.1, 1.0}}, fam, lam, lam0, r);
  CHECK(rel(at_s1, std::exp(-r * r / 0.02) + oracle::gauss_scale_integral(0.1, std::min(lam, lam0), r)) <= 1e-12);
  // r = 0 makes every Gaussian 1: 1 + (s2 - s1).
  CHECK(dirac_kernel(ScaleMeasure{DiracMeasure{0.1, 1.0}}, fam, 2.0, 2.0, 0.0) == doctest::Approx(2.9).epsilon(1e-14));
  // lam0 = s0 empties the window.
  CHECK(rel(dirac_kernel(ScaleMeasure{DiracMeasure{0.8, 2.0}}, fam, 1.7, 0.8, r), std::exp(-r * r / 1.28) / 2.0) <= 1e-14);
  CHECK_THROWS_AS(dirac_kernel(ScaleMeasure{LebesgueMeasure{1.0}}, fam, lam, lam0, r), std::invalid_argument);
  CHECK_THROWS_AS(DiracKernel(fam, DiracMeasure{2.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(DiracKernel(fam, DiracMeasure{1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("sum-of-Diracs spectral hand case") {
  // chi_1 = 2, chi_2 = 3, X(s2) = 1 at lam = lam0 = s2: 3 / 11.
  const auto X = [](double lam) { return lam >= 2.0 ? 1.0 : 0.0; };
  CHECK(std::abs(sum_dirac_kernel_hat(2.0, 3.0, X, 2.0, 2.0, 2.0) - 3.0 / 11.0) <= 1e-14);
  // lam = lam0 = s1: 4 / 11.
  CHECK(std::abs(sum_dirac_kernel_hat(2.0, 3.0, X, 2.0, 0.1, 0.1) - 4.0 / 11.0) <= 1e-14);
  // Symmetric in its scale arguments.
  const auto Xs = [](double lam) { return 0.3 * (lam - 0.1); };
  CHECK(sum_dirac_kernel_hat(2.0, 3.0, Xs, 2.0, 0.4, 1.5) == sum_dirac_kernel_hat(2.0, 3.0, Xs, 2.0, 1.5, 0.4));
  CHECK_THROWS_AS(sum_dirac_kernel_hat(0.0, 3.0, X, 2.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("integrated Dirac kernel matches quadrature of its weighted scale integrals") {
  const ScaleLadder l = paper_ladder();
  const GaussianScaleFamily fam{l, 2, ScaleProfile::Continuous};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.1, 2.0), dist(0.0, 3.0);
  const double L = 1.9;
  CHECK(integrated_dirac_kernel(fam, 0.1, 0.1, 0.0) == doctest::Approx(1.5 * L).epsilon(1e-14));
  for (int i = 0; i < 30; ++i) {
    const double lam = scale(rng), lam0 = scale(rng), r = dist(rng);
    const double lo = std::min(lam, lam0), hi = std::max(lam, lam0);
    auto k = [r](double mu) { return std::exp(-r * r / (2 * mu * mu)); };
    const double ref = oracle::adaptive_simpson(k, 0.1, 2.0) +
                       oracle::adaptive_simpson([&](double mu) { return (mu - 0.1) / L * k(mu); }, 0.1, lo) +
                       oracle::adaptive_simpson([&](double mu) { return (2.0 - mu) / L * k(mu); }, hi, 2.0);
    CHECK(rel(integrated_dirac_kernel(fam, lam, lam0, r), ref) <= 1e-9);
  }
}

TEST_CASE("closed-form backends: symmetry, Gram positivity, monotonicity") {
  const ScaleLadder l = paper_ladder();
  std::vector<std::unique_ptr<ScaleSpaceKernel>> kernels;
  for (ScaleProfile p : {ScaleProfile::Continuous, ScaleProfile::PiecewiseConstant}) {
    const GaussianScaleFamily fam{l, 2, p};
    kernels.push_back(std::make_unique<DiracKernel>(fam, DiracMeasure{0.7, 1.3}));
    kernels.push_back(std::make_unique<DiracKernel>(fam, DiracMeasure{2.0, 0.5}));
    kernels.push_back(std::make_unique<IntegratedDiracKernel>(fam));
  }
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> scale(0.1, 2.0), coord(-1.5, 1.5), dist(0.0, 3.0);
  for (const auto& k : kernels) {
    for (int i = 0; i < 100; ++i) {
      const double a = scale(rng), b = scale(rng), r = dist(rng);
      CHECK(std::abs((*k)(a, b, r) - (*k)(b, a, r)) <= 1e-12);
      CHECK((*k)(a, b, 0.0) > 0.0);
    }
    const int n = 30;
    std::vector<double> s(n);
    Eigen::MatrixXd x(n, 2), G(n, n);
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = scale(rng);
      x.row(i) << coord(rng), coord(rng);
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        G(i, j) = (*k)(s[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(j)], (x.row(i) - x.row(j)).norm());
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues();
    CHECK(eig.minCoeff() >= -1e-8 * eig.maxCoeff());
    for (int i = 0; i < 20; ++i) {
      const double a = scale(rng), b = scale(rng);
      double prev = (*k)(a, b, 0.0);
      for (double r = 0.05; r < 4.0; r += 0.05) {
        const double v = (*k)(a, b, r);
        CHECK(v <= prev + 1e-15);
        prev = v;
      }
    }
  }
}

TEST_CASE("closed-form slopes are derivatives in c = r^2 / 2") {
  const GaussianScaleFamily fam{paper_ladder(), 2, ScaleProfile::Continuous};
  const DiracKernel k(fam, DiracMeasure{0.9, 1.1});
  const IntegratedDiracKernel ik(fam);
  for (const ScaleSpaceKernel* kernel : {static_cast<const ScaleSpaceKernel*>(&k), static_cast<const ScaleSpaceKernel*>(&ik)})
    for (double r : {0.2, 0.8, 1.7}) {
      const double c = 0.5 * r * r, h = 1e-6;
      const double fd = ((*kernel)(0.4, 1.6, std::sqrt(2 * (c + h))) - (*kernel)(0.4, 1.6, std::sqrt(2 * (c - h)))) / (2 * h);
      CHECK(rel(kernel->sample(0.4, 1.6, r).slope, fd) <= 1e-6);
    }
}

TEST_CASE("product kernels") {
  const ProductKernel sep = ProductKernel::separable(0.5, 1.0);
  const ProductKernel resc = ProductKernel::rescaling(0.5, 1.0);
  Eigen::VectorXd x(2), y(2);
  x << 0.3, -0.2;
  y << -0.4, 0.9;
  CHECK(sep(0.5, 0.7, x, y) == doctest::Approx(std::exp(-0.04 / 0.5) * std::exp(-(x - y).squaredNorm() / 2)));
  CHECK(resc(0.5, 0.7, x, y) == doctest::Approx(std::exp(-0.04 / 0.5) * std::exp(-(x / 0.5 - y / 0.7).squaredNorm() / 2)));
  CHECK(product_kernel(resc, 0.7, 0.5, y, x) == doctest::Approx(resc(0.5, 0.7, x, y)));
  CHECK(resc(0.8, 0.8, x, x) == 1.0);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.1, 2.0), coord(-1.5, 1.5);
  for (const ProductKernel* k : {&sep, &resc}) {
    const int n = 20;
    std::vector<double> s(n);
    std::vector<Eigen::VectorXd> p(n, Eigen::VectorXd(2));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = scale(rng);
      p[static_cast<std::size_t>(i)] << coord(rng), coord(rng);
    }
    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        G(i, j) = (*k)(s[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(j)], p[static_cast<std::size_t>(i)],
                       p[static_cast<std::size_t>(j)]);
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues();
    CHECK(eig.minCoeff() >= -1e-10 * eig.maxCoeff());
  }
}

TEST_CASE("measure validation") {
  const ScaleLadder l = paper_ladder();
  CHECK_NOTHROW(validate(ScaleMeasure{SumDiracMeasure{1.0, 2.0}}, l));
  CHECK_THROWS_AS(validate(ScaleMeasure{SumDiracMeasure{0.0, 2.0}}, l), std::invalid_argument);
  CHECK_THROWS_AS(validate(ScaleMeasure{LebesgueMeasure{-1.0}}, l), std::invalid_argument);
  CHECK_THROWS_AS(validate(ScaleMeasure{DiracMeasure{0.05, 1.0}}, l), std::invalid_argument);
}
