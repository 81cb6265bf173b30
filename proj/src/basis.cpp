#include "ssp/basis.hpp"

#include <algorithm>
#include <cmath>

namespace ssp {

std::vector<double> KnotVector::padded() const {
  std::vector<double> t;
  t.reserve(interior_knots.size() + 2 * degree);
  for (int i = 0; i < degree; ++i) t.push_back(interior_knots.front());
  t.insert(t.end(), interior_knots.begin(), interior_knots.end());
  for (int i = 0; i < degree; ++i) t.push_back(interior_knots.back());
  return t;
}

int KnotVector::basis_count() const {
  // padded size - degree - 1 = distinct + 2*degree - degree - 1.
  return static_cast<int>(interior_knots.size()) + degree - 1;
}

KnotVector place_knots(TimeWindow window, double last_survey_year, double spacing,
                       int degree) {
  if (spacing < 1.0) {
    throw ConfigError("knot spacing must be at least one year");
  }
  if (degree < 0) {
    throw ConfigError("spline degree must be non-negative");
  }
  if (window.end_year - window.start_year < spacing) {
    throw ConfigError("time window shorter than one knot spacing interval");
  }
  if (last_survey_year < window.start_year || last_survey_year > window.end_year) {
    throw ConfigError("anchor year outside the time window");
  }
  const int j_min =
      -static_cast<int>(std::ceil((last_survey_year - window.start_year) / spacing));
  const int j_max =
      static_cast<int>(std::ceil((window.end_year - last_survey_year) / spacing));
  KnotVector kv;
  kv.degree = degree;
  kv.interior_knots.reserve(j_max - j_min + 1);
  for (int j = j_min; j <= j_max; ++j) {
    kv.interior_knots.push_back(last_survey_year + j * spacing);
  }
  kv.k_star_index = -j_min;
  return kv;
}

Eigen::VectorXd basis_row(const KnotVector& knots, double t) {
  const std::vector<double> tk = knots.padded();
  const int degree = knots.degree;
  const int n = static_cast<int>(tk.size());
  const int n_basis = knots.basis_count();
  const double lo = tk[degree];
  const double hi = tk[n - 1 - degree];
  if (t < lo || t > hi) {
    throw ConfigError("evaluation point outside the knot span");
  }

  // Active span index i with tk[i] <= t < tk[i+1]; the right endpoint belongs
  // to the last non-empty span.
  int i;
  if (t >= hi) {
    i = n - degree - 2;
    while (i > degree && tk[i] >= tk[i + 1]) --i;
  } else {
    i = static_cast<int>(std::upper_bound(tk.begin() + degree,
                                          tk.begin() + (n - degree), t) -
                         tk.begin()) -
        1;
  }

  // Cox–de Boor triangle over the degree+1 bases active on span i.
  Eigen::VectorXd local = Eigen::VectorXd::Zero(degree + 1);
  local(0) = 1.0;
  std::vector<double> left(degree + 1), right(degree + 1);
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - tk[i + 1 - j];
    right[j] = tk[i + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? local(r) / denom : 0.0;
      local(r) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    local(j) = saved;
  }

  Eigen::VectorXd row = Eigen::VectorXd::Zero(n_basis);
  for (int j = 0; j <= degree; ++j) {
    const int idx = i - degree + j;
    if (idx >= 0 && idx < n_basis) row(idx) = local(j);
  }
  return row;
}

BasisMatrix build_basis(const KnotVector& knots, const std::vector<double>& grid) {
  BasisMatrix bm;
  bm.grid = grid;
  bm.values.resize(static_cast<Eigen::Index>(grid.size()), knots.basis_count());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    bm.values.row(static_cast<Eigen::Index>(g)) = basis_row(knots, grid[g]).transpose();
  }
  return bm;
}

std::vector<double> greville_abscissae(const KnotVector& knots) {
  const std::vector<double> tk = knots.padded();
  const int n_basis = knots.basis_count();
  std::vector<double> xi(n_basis);
  if (knots.degree == 0) {
    for (int k = 0; k < n_basis; ++k) xi[k] = 0.5 * (tk[k] + tk[k + 1]);
    return xi;
  }
  for (int k = 0; k < n_basis; ++k) {
    double s = 0.0;
    for (int j = 1; j <= knots.degree; ++j) s += tk[k + j];
    xi[k] = s / knots.degree;
  }
  return xi;
}

int anchor_coefficient(const KnotVector& knots) {
  const double target = knots.interior_knots[knots.k_star_index];
  const std::vector<double> xi = greville_abscissae(knots);
  int best = 0;
  double best_dist = std::abs(xi[0] - target);
  for (int k = 1; k < static_cast<int>(xi.size()); ++k) {
    const double d = std::abs(xi[k] - target);
    if (d < best_dist) {
      best = k;
      best_dist = d;
    }
  }
  return best;
}

}  // namespace ssp
