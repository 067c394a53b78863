#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fredse/error.hpp"
#include "fredse/quadrature.hpp"
#include "fredse/rng.hpp"

using namespace fredse;

TEST_CASE("rng streams are reproducible and documented") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(Rng(42).next() != c.next());
  // splitmix64 expansion of seed 0 (reference values of the published algorithm)
  const Rng z(0);
  CHECK(z.state()[0] == 0xe220a8397b1dcdafULL);
  CHECK(z.state()[1] == 0x6e789e6aa1b965f4ULL);
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
  }
  CHECK(replication_seed(10, 3) == 13);
}

TEST_CASE("normal draws have unit variance") {
  Rng r(5);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    ss += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(ss / n - 1.0) < 0.02);
}

TEST_CASE("domain invariants") {
  CHECK(Domain::interval(-5, 5).volume() == 10.0);
  CHECK_THROWS_AS(Domain::interval(1, 1), ConfigError);
  CHECK_THROWS_AS(Domain({0, 0}, {1}), ConfigError);
}

TEST_CASE("sample_grid: inside domains, volume, determinism") {
  const auto unit = Domain::interval(0, 1);
  const QuadratureGrid g = sample_grid(unit, unit, 37, 53, 9);
  CHECK(g.j1() == 37);
  CHECK(g.j2() == 53);
  CHECK(g.inner_volume == 1.0);
  CHECK(g.outer_points.minCoeff() >= 0.0);
  CHECK(g.inner_points.maxCoeff() < 1.0);
  const QuadratureGrid h = sample_grid(unit, unit, 37, 53, 9);
  CHECK(g.outer_points == h.outer_points);
  CHECK(g.inner_points == h.inner_points);
  CHECK(sample_grid(unit, Domain::interval(-5, 5), 4, 4, 0).inner_volume == 10.0);
  CHECK_THROWS_AS(sample_grid(unit, unit, 0, 4, 0), ConfigError);
}

TEST_CASE("mc_integral: constants, moments, linearity, errors") {
  const auto unit = Domain::interval(0, 1);
  const QuadratureGrid g = sample_grid(unit, Domain::interval(-1, 1), 100000, 100000, 1);
  CHECK(mc_integral([](std::span<const double>) { return 1.0; }, g.outer_points, 1.0) == 1.0);
  CHECK(mc_integral([](std::span<const double>) { return 3.5; }, g.inner_points, 2.0) == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(mc_integral([](std::span<const double> s) { return s[0]; }, g.outer_points, 1.0) == doctest::Approx(0.5).epsilon(0.02));
  const double sq = mc_integral([](std::span<const double> s) { return s[0] * s[0]; }, g.inner_points, 2.0);
  CHECK(std::abs(sq - 2.0 / 3.0) < 0.01);

  auto f = [](std::span<const double> s) { return std::sin(s[0]); };
  auto h = [](std::span<const double> s) { return s[0] * s[0]; };
  const double lhs = mc_integral([&](std::span<const double> s) { return 2.0 * f(s) - 3.0 * h(s); }, g.inner_points, 2.0);
  const double rhs = 2.0 * mc_integral(f, g.inner_points, 2.0) - 3.0 * mc_integral(h, g.inner_points, 2.0);
  CHECK(std::abs(lhs - rhs) < 1e-12);

  CHECK_THROWS_AS(mc_integral([](std::span<const double>) { return std::nan(""); }, g.outer_points, 1.0), NumericError);
  CHECK_THROWS_AS(mc_integral(f, Eigen::MatrixXd(1, 0), 1.0), ConfigError);
}

TEST_CASE("Monte Carlo error shrinks like 1/sqrt(J)") {
  const auto unit = Domain::interval(0, 1);
  auto rms = [&](int j) {
    double ss = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const QuadratureGrid g = sample_grid(unit, unit, 1, j, seed);
      const double e = mc_integral([](std::span<const double> s) { return s[0]; }, g.inner_points, 1.0) - 0.5;
      ss += e * e;
    }
    return std::sqrt(ss / 50);
  };
  const double ratio = rms(500) / rms(2000);
  CHECK(ratio >= 1.6);
  CHECK(ratio <= 2.5);
}

TEST_CASE("gauss_grid integrates cubics exactly with equal weights") {
  const auto d = Domain::interval(-1, 3);
  const QuadratureGrid g = gauss_grid(d, d, 10, 10);
  const double cubic = mc_integral([](std::span<const double> s) { return s[0] * s[0] * s[0] - s[0]; }, g.inner_points, 4.0);
  CHECK(cubic == doctest::Approx(20.0 - 4.0).epsilon(1e-13));
  CHECK_THROWS_AS(gauss_grid(d, d, 3, 4), ConfigError);
}

TEST_CASE("grid CSV dump lists both node sets") {
  const auto unit = Domain::interval(0, 1);
  std::ostringstream os;
  write_grid_csv(os, sample_grid(unit, unit, 2, 3, 0));
  const std::string s = os.str();
  CHECK(s.rfind("kind,index,x1\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 6);
}
