#pragma once

// Exact-arithmetic Cox-de Boor evaluation over GMP rationals. Independent of
// the library implementation: plain textbook recursion over all basis
// functions, no span localization.

#include <gmpxx.h>

#include <vector>

namespace testsupport {

/// All K basis values at t for the padded knot vector, degree d, as exact
/// rationals converted to double at the end.
inline std::vector<double> exact_basis_row(const std::vector<double>& padded_knots,
                                           int degree, double t_value) {
  const int n = static_cast<int>(padded_knots.size());
  const int n_basis = n - degree - 1;
  std::vector<mpq_class> knots(n);
  for (int i = 0; i < n; ++i) knots[i] = mpq_class(padded_knots[i]);
  const mpq_class t(t_value);

  // Degree-0 indicators with the right-endpoint convention: the last
  // non-empty interval is closed on the right.
  int last_nonempty = -1;
  for (int i = 0; i < n - 1; ++i) {
    if (knots[i] < knots[i + 1]) last_nonempty = i;
  }
  std::vector<std::vector<mpq_class>> b(degree + 1,
                                        std::vector<mpq_class>(n - 1, 0));
  for (int i = 0; i < n - 1; ++i) {
    const bool inside =
        (t >= knots[i] && t < knots[i + 1]) ||
        (i == last_nonempty && t == knots[i + 1]);
    b[0][i] = inside ? 1 : 0;
  }
  for (int d = 1; d <= degree; ++d) {
    for (int i = 0; i + d < n - 1; ++i) {
      mpq_class left = 0, right = 0;
      const mpq_class den_l = knots[i + d] - knots[i];
      const mpq_class den_r = knots[i + d + 1] - knots[i + 1];
      if (den_l != 0) left = (t - knots[i]) / den_l * b[d - 1][i];
      if (den_r != 0) right = (knots[i + d + 1] - t) / den_r * b[d - 1][i + 1];
      b[d][i] = left + right;
    }
  }
  std::vector<double> out(n_basis);
  for (int i = 0; i < n_basis; ++i) out[i] = b[degree][i].get_d();
  return out;
}

}  // namespace testsupport
