#include "ssp/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "ssp/stats.hpp"

namespace ssp {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Iterates all kept draws of all chains, presenting each as a ParameterState.
template <typename Fn>
void for_each_draw(const DrawStore& draws, const ModelData& data, Fn&& fn) {
  const ModelSpec spec = model_by_name(draws.model_name);
  ParameterState state = initialize(spec, data, 0);
  long index = 0;
  for (const auto& chain : draws.chains) {
    for (long i = 0; i < chain.rows(); ++i) {
      draws.registry.unpack(chain.row(i).transpose(), &state);
      fn(index++, state);
    }
  }
}

}  // namespace

std::vector<TrajectorySummary> summarize_trajectories(const DrawStore& draws,
                                                      const ModelData& data) {
  if (draws.total_draws() == 0) throw Error("empty draw store");
  const bool anchored = draws.k_star_mode == KStarMode::anchored;
  const long S = draws.total_draws();
  const int G = data.grid_size();
  const int M = data.n_methods();

  std::vector<TrajectorySummary> rows;
  rows.reserve(static_cast<std::size_t>(data.n_regions()) * M * G);

  // One region at a time to bound memory: S x G per method.
  std::vector<Eigen::MatrixXd> shares(M);
  for (int p = 0; p < data.n_regions(); ++p) {
    for (int m = 0; m < M; ++m) shares[m].resize(S, G);
    for_each_draw(draws, data, [&](long s, const ParameterState& st) {
      for (int m = 0; m < M; ++m) {
        Eigen::VectorXd psi;
        if (anchored) {
          const Eigen::VectorXd beta = reconstruct_beta(
              st.region.alpha(p, m), st.region.delta[p][m], data.anchor[p]);
          psi = data.basis[p].values * beta;
        } else {
          psi = Eigen::VectorXd::Constant(G, st.region.alpha(p, m)) +
                data.basis[p].values * st.ext.beta[p][m];
        }
        for (int g = 0; g < G; ++g) shares[m](s, g) = inverse_logit(psi(g));
      }
    });
    for (int m = 0; m < M; ++m) {
      for (int g = 0; g < G; ++g) {
        std::vector<double> pub(shares[m].col(g).data(),
                                shares[m].col(g).data() + S);
        std::sort(pub.begin(), pub.end());
        TrajectorySummary row;
        row.region_id = data.region_ids[p];
        row.method = data.methods[m];
        row.year = data.grid_years[g];
        row.public_lower = quantile_sorted(pub, 0.025);
        row.public_median = quantile_sorted(pub, 0.5);
        row.public_upper = quantile_sorted(pub, 0.975);
        // Private shares are 1 - public per draw; sorting flips order.
        row.private_lower = 1.0 - row.public_upper;
        row.private_median = 1.0 - row.public_median;
        row.private_upper = 1.0 - row.public_lower;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

CorrelationSummary correlation_summary(const DrawStore& draws,
                                       CorrelationLevel level) {
  if (draws.total_draws() == 0) throw Error("empty draw store");
  const ParamRegistry& reg = draws.registry;
  const int M = reg.n_methods;
  CorrelationSummary out;
  out.level = level;
  out.methods = draws.methods;
  out.correlation = Eigen::MatrixXd::Identity(M, M);

  const bool national = level == CorrelationLevel::national;
  const bool full_cov = national ? reg.has_sigma_theta : reg.has_sigma_alpha;
  if (!full_cov) {
    // Diagonal-hierarchy families: off-diagonal correlations are exactly zero.
    return out;
  }
  const int ofs = national ? reg.sigma_theta_ofs : reg.sigma_alpha_ofs;

  const long S = draws.total_draws();
  Eigen::MatrixXd sigma(M, M);
  std::vector<std::vector<double>> corr_draws(
      static_cast<std::size_t>(M * (M - 1) / 2));
  for (auto& v : corr_draws) v.reserve(S);
  for (const auto& chain : draws.chains) {
    for (long i = 0; i < chain.rows(); ++i) {
      int idx = ofs;
      for (int a = 0; a < M; ++a) {
        for (int b = a; b < M; ++b) {
          sigma(a, b) = chain(i, idx);
          sigma(b, a) = chain(i, idx);
          ++idx;
        }
      }
      int pair = 0;
      for (int a = 0; a < M; ++a) {
        for (int b = a + 1; b < M; ++b) {
          corr_draws[pair++].push_back(sigma(a, b) /
                                       std::sqrt(sigma(a, a) * sigma(b, b)));
        }
      }
    }
  }
  int pair = 0;
  for (int a = 0; a < M; ++a) {
    for (int b = a + 1; b < M; ++b) {
      const double med = median(corr_draws[pair++]);
      out.correlation(a, b) = med;
      out.correlation(b, a) = med;
    }
  }
  return out;
}

std::vector<YearSummaryRow> year_summary(const DrawStore& draws, const ModelData& data,
                                         int year) {
  const int g = data.year_row(year);  // throws off-grid
  const bool anchored = draws.k_star_mode == KStarMode::anchored;
  const long S = draws.total_draws();
  const int M = data.n_methods();
  const int P = data.n_regions();

  // Per-region posterior medians of both sectors, computed per draw.
  std::vector<std::vector<double>> region_public_medians(M);
  std::vector<std::vector<double>> region_private_medians(M);
  Eigen::MatrixXd pub(S, M);
  for (int p = 0; p < P; ++p) {
    const Eigen::VectorXd basis_row = data.basis[p].values.row(g).transpose();
    for_each_draw(draws, data, [&](long s, const ParameterState& st) {
      for (int m = 0; m < M; ++m) {
        double psi;
        if (anchored) {
          const Eigen::VectorXd beta = reconstruct_beta(
              st.region.alpha(p, m), st.region.delta[p][m], data.anchor[p]);
          psi = basis_row.dot(beta);
        } else {
          psi = st.region.alpha(p, m) + basis_row.dot(st.ext.beta[p][m]);
        }
        pub(s, m) = inverse_logit(psi);
      }
    });
    for (int m = 0; m < M; ++m) {
      std::vector<double> pub_col(pub.col(m).data(), pub.col(m).data() + S);
      std::vector<double> priv_col(pub_col.size());
      for (std::size_t i = 0; i < pub_col.size(); ++i) priv_col[i] = 1.0 - pub_col[i];
      region_public_medians[m].push_back(median(pub_col));
      region_private_medians[m].push_back(median(priv_col));
    }
  }

  std::vector<YearSummaryRow> rows;
  for (int m = 0; m < M; ++m) {
    YearSummaryRow row;
    row.method = data.methods[m];
    row.public_median = median(region_public_medians[m]);
    row.public_sd = sample_sd(region_public_medians[m]);
    row.private_median = median(region_private_medians[m]);
    row.private_sd = sample_sd(region_private_medians[m]);
    rows.push_back(row);
  }
  return rows;
}

void write_trajectories_csv(std::ostream& out,
                            const std::vector<TrajectorySummary>& rows) {
  out << "# per-draw public+private shares sum to 1; summarized medians need not\n";
  out << "region_id,method,year,sector,median,lower_2_5,upper_97_5\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.region_id << ',' << method_token(r.method) << ',' << r.year
        << ",public," << r.public_median << ',' << r.public_lower << ','
        << r.public_upper << '\n';
    out << r.region_id << ',' << method_token(r.method) << ',' << r.year
        << ",private," << r.private_median << ',' << r.private_lower << ','
        << r.private_upper << '\n';
  }
}

void write_correlations_csv(std::ostream& out,
                            const std::vector<CorrelationSummary>& summaries) {
  out << "level,method_a,method_b,correlation\n";
  out.precision(10);
  for (const auto& s : summaries) {
    const char* level =
        s.level == CorrelationLevel::national ? "national" : "subnational";
    const int M = static_cast<int>(s.methods.size());
    for (int a = 0; a < M; ++a) {
      for (int b = 0; b < M; ++b) {
        out << level << ',' << method_token(s.methods[a]) << ','
            << method_token(s.methods[b]) << ',' << s.correlation(a, b) << '\n';
      }
    }
  }
}

void write_year_summary_csv(std::ostream& out, const std::vector<YearSummaryRow>& rows,
                            int year) {
  out << "# cross-region spread of per-region posterior medians for " << year
      << "; per-draw shares close to 1, summarized medians need not\n";
  out << "method,public_median,public_sd,private_median,private_sd\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << method_token(r.method) << ',' << r.public_median << ',' << r.public_sd
        << ',' << r.private_median << ',' << r.private_sd << '\n';
  }
}

}  // namespace ssp
