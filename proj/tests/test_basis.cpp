#include <doctest.h>

#include <cmath>

#include "exact_bspline.hpp"
#include "ssp/basis.hpp"
#include "ssp/rng.hpp"

using namespace ssp;

TEST_CASE("knot placement anchors the lattice on the last survey year") {
  const KnotVector kv = place_knots({1990, 2030}, 2015, 5.0, 3);
  const std::vector<double> expected = {1990, 1995, 2000, 2005, 2010,
                                        2015, 2020, 2025, 2030};
  CHECK(kv.interior_knots == expected);
  CHECK(kv.k_star_index == 5);
  CHECK(kv.interior_knots[kv.k_star_index] == 2015.0);
  CHECK(kv.basis_count() == 11);
}

TEST_CASE("off-lattice anchors extend the knots past the window") {
  const KnotVector kv = place_knots({1990, 2030}, 2014, 5.0, 3);
  CHECK(kv.interior_knots.front() <= 1990.0);
  CHECK(kv.interior_knots.back() >= 2030.0);
  CHECK(kv.interior_knots[kv.k_star_index] == 2014.0);
  CHECK(kv.interior_knots.front() == 1989.0);
  CHECK(kv.interior_knots.back() == 2034.0);
}

TEST_CASE("anchor at the window end lands on the final breakpoint") {
  const KnotVector kv = place_knots({1990, 2030}, 2030, 5.0, 3);
  CHECK(kv.k_star_index == static_cast<int>(kv.interior_knots.size()) - 1);
  CHECK(anchor_coefficient(kv) == kv.basis_count() - 1);
}

TEST_CASE("regions with different last surveys get distinct knot sets") {
  const KnotVector a = place_knots({1990, 2030}, 2014, 5.0, 3);
  const KnotVector b = place_knots({1990, 2030}, 2016, 5.0, 3);
  CHECK(a.interior_knots != b.interior_knots);
}

TEST_CASE("window shorter than the spacing is rejected") {
  CHECK_THROWS_AS(place_knots({2010, 2013}, 2011, 5.0, 3), ConfigError);
  CHECK_THROWS_AS(place_knots({1990, 2030}, 2015, 0.5, 3), ConfigError);
  CHECK_THROWS_AS(place_knots({1990, 2030}, 1950, 5.0, 3), ConfigError);
}

TEST_CASE("partition of unity on the annual grid") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int spacing = 1 + static_cast<int>(rng.uniform() * 8);
    const int degree = 1 + static_cast<int>(rng.uniform() * 3);
    const int anchor = 1990 + static_cast<int>(rng.uniform() * 41);
    const KnotVector kv = place_knots({1990, 2030}, anchor, spacing, degree);
    std::vector<double> grid;
    for (int y = 1990; y <= 2030; ++y) grid.push_back(y);
    const BasisMatrix bm = build_basis(kv, grid);
    for (int g = 0; g < bm.values.rows(); ++g) {
      CHECK(std::abs(bm.values.row(g).sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("degree zero yields a single active indicator") {
  KnotVector kv;
  kv.interior_knots = {2000, 2005};
  kv.k_star_index = 0;
  kv.degree = 0;
  const Eigen::VectorXd row = basis_row(kv, 2002.0);
  CHECK(row.size() == 1);
  CHECK(row(0) == 1.0);
}

TEST_CASE("values match the exact rational Cox-de Boor oracle") {
  const KnotVector kv = place_knots({1990, 2030}, 2015, 5.0, 3);
  // Knot years and mid-years, including both window ends.
  for (double t : {1990.0, 1995.0, 2003.0, 2010.0, 2015.0, 2017.5, 2030.0}) {
    const Eigen::VectorXd got = basis_row(kv, t);
    const auto expected = testsupport::exact_basis_row(kv.padded(), kv.degree, t);
    REQUIRE(static_cast<int>(expected.size()) == got.size());
    for (int k = 0; k < got.size(); ++k) {
      CHECK(std::abs(got(k) - expected[k]) < 1e-12);
    }
  }
}

TEST_CASE("basis functions vanish exactly outside their support") {
  const KnotVector kv = place_knots({1990, 2030}, 2015, 5.0, 3);
  const auto padded = kv.padded();
  for (double t : {1991.0, 2004.0, 2015.0, 2028.0}) {
    const Eigen::VectorXd row = basis_row(kv, t);
    for (int k = 0; k < row.size(); ++k) {
      const bool in_support = t >= padded[k] && t <= padded[k + kv.degree + 1];
      if (!in_support) CHECK(row(k) == 0.0);
    }
  }
}

TEST_CASE("translation equivariance") {
  const KnotVector kv = place_knots({1990, 2030}, 2013, 4.0, 3);
  KnotVector shifted = kv;
  for (double& knot : shifted.interior_knots) knot += 37.0;
  for (double t : {1992.0, 2000.5, 2013.0, 2029.0}) {
    const Eigen::VectorXd a = basis_row(kv, t);
    const Eigen::VectorXd b = basis_row(shifted, t + 37.0);
    for (int k = 0; k < a.size(); ++k) CHECK(a(k) == doctest::Approx(b(k)).epsilon(1e-15));
  }
}

TEST_CASE("evaluation outside the knot span fails") {
  const KnotVector kv = place_knots({1990, 2030}, 2015, 5.0, 3);
  CHECK_THROWS_AS(basis_row(kv, 1900.0), ConfigError);
  std::vector<double> grid = {1990, 2031 + 5.0};
  CHECK_THROWS_AS(build_basis(kv, grid), ConfigError);
}

TEST_CASE("greville anchor mapping") {
  SUBCASE("cubic with uniform interior knots hits the anchor year exactly") {
    const KnotVector kv = place_knots({1990, 2030}, 2015, 5.0, 3);
    const auto xi = greville_abscissae(kv);
    const int k_star = anchor_coefficient(kv);
    CHECK(xi[k_star] == doctest::Approx(2015.0).epsilon(1e-12));
  }
  SUBCASE("degree one reduces to the breakpoint index") {
    const KnotVector kv = place_knots({1990, 2030}, 2010, 5.0, 1);
    CHECK(anchor_coefficient(kv) == kv.k_star_index);
  }
  SUBCASE("a coefficient pinned at the anchor controls the level there") {
    // With all coefficients zero except the anchored one set to 1, the spline
    // at the anchor year equals the dominant basis value.
    const KnotVector kv = place_knots({1990, 2030}, 2015, 5.0, 3);
    const int k_star = anchor_coefficient(kv);
    const Eigen::VectorXd row = basis_row(kv, 2015.0);
    int argmax = 0;
    row.maxCoeff(&argmax);
    CHECK(argmax == k_star);
  }
}
