#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ssp/types.hpp"

namespace ssp {

/// Region-specific B-spline knot set. One breakpoint is anchored exactly on
/// the region's most recent survey year so projections hold level beyond it.
struct KnotVector {
  std::vector<double> interior_knots;  // distinct breakpoints, strictly ascending
  int k_star_index = 0;                // interior_knots[k_star_index] == anchor year
  int degree = 3;

  /// Clamped knot vector: end breakpoints repeated degree+1 times.
  std::vector<double> padded() const;
  /// Number of basis functions: distinct breakpoints + degree - 1.
  int basis_count() const;
  double span_start() const { return interior_knots.front(); }
  double span_end() const { return interior_knots.back(); }
};

/// Places breakpoints on a regular lattice of step `spacing` anchored so one
/// lands exactly on `last_survey_year`, extended outward to cover the window.
KnotVector place_knots(TimeWindow window, double last_survey_year, double spacing,
                       int degree = 3);

/// Basis evaluations over a year grid; rows sum to one.
struct BasisMatrix {
  std::vector<double> grid;
  Eigen::MatrixXd values;  // grid.size() x K

  int basis_count() const { return static_cast<int>(values.cols()); }
};

/// Evaluates all basis functions at one point via the Cox–de Boor recursion.
/// Entries outside the active span are exactly zero.
Eigen::VectorXd basis_row(const KnotVector& knots, double t);

BasisMatrix build_basis(const KnotVector& knots, const std::vector<double>& grid);

/// Greville abscissae (knot averages): the natural coefficient locations.
std::vector<double> greville_abscissae(const KnotVector& knots);

/// Coefficient index whose Greville abscissa sits on the anchor breakpoint;
/// this is the spline coefficient pinned by the level parameter.
int anchor_coefficient(const KnotVector& knots);

}  // namespace ssp
