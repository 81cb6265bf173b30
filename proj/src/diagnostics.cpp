#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssp/sampler.hpp"
#include "ssp/stats.hpp"

namespace ssp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Splits each chain in half (dropping a middle element when odd).
std::vector<Eigen::VectorXd> split_halves(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    const long n = c.size();
    const long half = n / 2;
    if (half < 2) throw ConfigError("chains too short to split for R-hat");
    out.push_back(c.head(half));
    out.push_back(c.tail(half));
  }
  return out;
}

bool all_constant(const std::vector<Eigen::VectorXd>& chains) {
  const double first = chains.front()(0);
  for (const auto& c : chains) {
    for (long i = 0; i < c.size(); ++i) {
      if (c(i) != first) return false;
    }
  }
  return true;
}

/// Pooled average-tie ranks mapped through the normal quantile function.
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& seqs) {
  const long n = seqs.front().size();
  const long total = n * static_cast<long>(seqs.size());
  struct Entry {
    double value;
    long seq;
    long pos;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    for (long i = 0; i < n; ++i) {
      entries.push_back({seqs[s](i), static_cast<long>(s), i});
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.value < b.value; });

  std::vector<Eigen::VectorXd> z(seqs.size(), Eigen::VectorXd(n));
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j + 1 < entries.size() && entries[j + 1].value == entries[i].value) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    const double u = (avg_rank - 0.375) / (static_cast<double>(total) + 0.25);
    const double value = normal_quantile(u);
    for (std::size_t k = i; k <= j; ++k) {
      z[entries[k].seq](entries[k].pos) = value;
    }
    i = j + 1;
  }
  return z;
}

struct BasicStats {
  double w = 0.0;         // mean within-sequence variance
  double var_plus = 0.0;  // pooled variance estimate
  std::vector<double> means;
  std::vector<double> vars;
};

BasicStats basic_stats(const std::vector<Eigen::VectorXd>& seqs) {
  BasicStats st;
  const double n = static_cast<double>(seqs.front().size());
  for (const auto& s : seqs) {
    const double m = s.mean();
    st.means.push_back(m);
    st.vars.push_back((s.array() - m).square().sum() / (n - 1.0));
  }
  st.w = mean(st.vars);
  const double b_over_n = seqs.size() > 1 ? sample_sd(st.means) * sample_sd(st.means)
                                          : 0.0;
  st.var_plus = st.w * (n - 1.0) / n + b_over_n;
  return st;
}

}  // namespace

double r_hat_from_chains(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw ConfigError("r_hat needs at least one chain");
  long kept = 0;
  for (const auto& c : chains) kept += c.size();
  if (kept < 50) throw ConfigError("r_hat requires at least 50 kept draws");
  if (all_constant(chains)) return kInf;

  const auto seqs = rank_normalize(split_halves(chains));
  const BasicStats st = basic_stats(seqs);
  if (!(st.w > 0.0)) return kInf;
  return std::sqrt(st.var_plus / st.w);
}

double r_hat(const DrawStore& draws, const std::string& parameter) {
  return r_hat_from_chains(draws.column(parameter));
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw ConfigError("ess needs at least one chain");
  if (all_constant(chains)) return 0.0;

  const auto seqs = rank_normalize(split_halves(chains));
  const long n = seqs.front().size();
  const long m = static_cast<long>(seqs.size());
  const BasicStats st = basic_stats(seqs);
  if (!(st.var_plus > 0.0)) return 0.0;

  // Centered sequences for autocovariance.
  std::vector<Eigen::VectorXd> centered;
  centered.reserve(seqs.size());
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    centered.push_back(seqs[s].array() - st.means[s]);
  }
  auto acov = [&](long t) {
    double total = 0.0;
    for (const auto& c : centered) {
      double dot = 0.0;
      for (long i = 0; i + t < n; ++i) dot += c(i) * c(i + t);
      total += dot / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };

  // Paired autocorrelations kept while the pair sums stay positive (Geyer
  // initial positive sequence), then forced monotone non-increasing.
  std::vector<double> rho;
  rho.push_back(1.0);
  rho.push_back(1.0 - (st.w - acov(1)) / st.var_plus);
  long t = 1;
  while (t + 2 < n) {
    const double rho_even = 1.0 - (st.w - acov(t + 1)) / st.var_plus;
    const double rho_odd = 1.0 - (st.w - acov(t + 2)) / st.var_plus;
    if (rho_even + rho_odd <= 0.0) break;
    rho.push_back(rho_even);
    rho.push_back(rho_odd);
    t += 2;
  }
  for (std::size_t i = 3; i + 1 < rho.size(); i += 2) {
    const double prev_pair = rho[i - 2] + rho[i - 1];
    if (rho[i] + rho[i + 1] > prev_pair) {
      rho[i] = 0.5 * prev_pair;
      rho[i + 1] = rho[i];
    }
  }
  double tau = -1.0;
  for (double r : rho) tau += 2.0 * r;
  if (tau < 1e-12) tau = 1e-12;
  const double total = static_cast<double>(n * m);
  return std::min(total / tau, total);
}

std::vector<ConvergenceRow> convergence_report(const DrawStore& draws) {
  std::vector<ConvergenceRow> rows;
  rows.reserve(draws.registry.names().size());
  for (int i = 0; i < draws.registry.dim(); ++i) {
    const std::string& name = draws.registry.names()[i];
    std::vector<Eigen::VectorXd> cols;
    cols.reserve(draws.chains.size());
    for (const auto& chain : draws.chains) cols.push_back(chain.col(i));

    ConvergenceRow row;
    row.parameter = name;
    row.r_hat = r_hat_from_chains(cols);
    row.constant = std::isinf(row.r_hat) && all_constant(cols);
    row.ess = row.constant ? 0.0 : effective_sample_size(cols);
    const auto it = draws.acceptance_rates.find(draws.registry.block_of(i));
    row.acceptance_rate = it != draws.acceptance_rates.end() ? it->second : 1.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ssp
