#include "ssp/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "ssp/stats.hpp"

namespace ssp {

namespace {

int vech_size(int m) { return m * (m + 1) / 2; }

void pack_vech(const Eigen::MatrixXd& sigma, double* out) {
  const int m = static_cast<int>(sigma.rows());
  int idx = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) out[idx++] = sigma(i, j);
  }
}

void unpack_vech(const double* in, Eigen::MatrixXd* sigma) {
  const int m = static_cast<int>(sigma->rows());
  int idx = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      (*sigma)(i, j) = in[idx];
      (*sigma)(j, i) = in[idx];
      ++idx;
    }
  }
}

}  // namespace

void SamplerConfig::validate() const {
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  if (burn_in < 0) throw ConfigError("burn-in must be non-negative");
  if (thin <= 0) throw ConfigError("thinning interval must be positive");
  if (chains <= 0) throw ConfigError("chain count must be positive");
  if (burn_in >= iterations) {
    throw ConfigError("burn-in must be smaller than the iteration count");
  }
  if (kept_per_chain() < 100) {
    throw ConfigError("schedule keeps fewer than 100 draws per chain: (" +
                      std::to_string(iterations) + " - " + std::to_string(burn_in) +
                      ") / " + std::to_string(thin));
  }
}

ParamRegistry ParamRegistry::build(const ModelSpec& spec, const ModelData& data) {
  ParamRegistry reg;
  const int M = data.n_methods();
  const int C = data.n_countries();
  const int P = data.n_regions();
  reg.n_methods = M;
  reg.n_countries = C;
  reg.n_regions = P;

  auto method_tok = [&](int m) { return std::string(method_token(data.methods[m])); };
  auto begin_block = [&](const std::string& id) {
    reg.blocks_.push_back({id, reg.dim_, 0});
  };
  auto push_scalar = [&](const std::string& name) {
    reg.names_.push_back(name);
    reg.index_[name] = reg.dim_;
    reg.scalar_block_.push_back(static_cast<int>(reg.blocks_.size()) - 1);
    reg.blocks_.back().size += 1;
    ++reg.dim_;
  };

  if (!spec.fixed.theta) {
    reg.has_theta = true;
    reg.theta_ofs = reg.dim_;
    begin_block("theta");
    for (int c = 0; c < C; ++c) {
      for (int m = 0; m < M; ++m) {
        push_scalar("theta[" + data.country_ids[c] + "," + method_tok(m) + "]");
      }
    }
  }

  reg.alpha_ofs = reg.dim_;
  begin_block("alpha");
  for (int p = 0; p < P; ++p) {
    for (int m = 0; m < M; ++m) {
      push_scalar("alpha[" + data.region_ids[p] + "," + method_tok(m) + "]");
    }
  }

  const bool anchored = spec.anchored();
  reg.has_delta = anchored;
  reg.has_beta = !anchored;
  begin_block(anchored ? "delta" : "beta");
  reg.coeff_region_ofs.resize(P);
  reg.coeff_len.resize(P);
  for (int p = 0; p < P; ++p) {
    const int len = anchored ? data.coeff_count(p) - 1 : data.coeff_count(p);
    reg.coeff_region_ofs[p] = reg.dim_;
    reg.coeff_len[p] = len;
    for (int m = 0; m < M; ++m) {
      for (int k = 1; k <= len; ++k) {
        push_scalar(std::string(anchored ? "delta[" : "beta[") + data.region_ids[p] +
                    "," + method_tok(m) + "," + std::to_string(k) + "]");
      }
    }
  }

  auto push_vech = [&](const std::string& base, int* ofs, bool* flag) {
    *flag = true;
    *ofs = reg.dim_;
    begin_block(base);
    for (int i = 1; i <= M; ++i) {
      for (int j = i; j <= M; ++j) {
        push_scalar(base + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
      }
    }
  };

  if (spec.full_intercept_cov()) {
    if (!spec.fixed.sigma_theta) {
      push_vech("Sigma_theta", &reg.sigma_theta_ofs, &reg.has_sigma_theta);
    }
    if (!spec.fixed.sigma_alpha) {
      push_vech("Sigma_alpha", &reg.sigma_alpha_ofs, &reg.has_sigma_alpha);
    }
  } else {
    reg.has_sd_theta = true;
    reg.sd_theta_ofs = reg.dim_;
    begin_block("sd_theta");
    for (int m = 0; m < M; ++m) push_scalar("sd_theta[" + method_tok(m) + "]");
    reg.has_sd_alpha = true;
    reg.sd_alpha_ofs = reg.dim_;
    begin_block("sd_alpha");
    for (int m = 0; m < M; ++m) push_scalar("sd_alpha[" + method_tok(m) + "]");
  }

  switch (spec.family) {
    case ModelFamily::multivariate_intercept:
    case ModelFamily::zero_covariance:
      if (!spec.fixed.sigma_delta) {
        reg.has_sigma_delta = true;
        reg.sigma_delta_ofs = reg.dim_;
        begin_block("sigma_delta");
        push_scalar("sigma_delta");
      }
      break;
    case ModelFamily::multivariate_delta:
      if (!spec.fixed.sigma_delta_mv) {
        push_vech("Sigma_delta", &reg.sigma_delta_mv_ofs, &reg.has_sigma_delta_mv);
      }
      break;
    case ModelFamily::fully_multivariate:
      if (!spec.fixed.sigma_beta_mv) {
        push_vech("Sigma_beta", &reg.sigma_beta_mv_ofs, &reg.has_sigma_beta_mv);
      }
      break;
    case ModelFamily::shrinkage:
      if (!spec.fixed.sigma_beta) {
        reg.has_shrinkage = true;
        reg.shrink_ofs = reg.dim_;
        begin_block("shrinkage");
        for (int m = 0; m < M; ++m) push_scalar("sigma_beta[" + method_tok(m) + "]");
        for (int m = 0; m < M; ++m) push_scalar("xi2[" + method_tok(m) + "]");
        for (int m = 0; m < M; ++m) push_scalar("kappa2[" + method_tok(m) + "]");
        push_scalar("a_xi");
        push_scalar("c_xi");
        push_scalar("kappa_b2");
      }
      break;
  }
  return reg;
}

int ParamRegistry::index_of(const std::string& scalar_name) const {
  const auto it = index_.find(scalar_name);
  if (it == index_.end()) {
    throw ConfigError("unknown parameter '" + scalar_name + "'");
  }
  return it->second;
}

const std::string& ParamRegistry::block_of(int scalar_index) const {
  return blocks_[scalar_block_[scalar_index]].id;
}

Eigen::VectorXd ParamRegistry::pack(const ParameterState& state) const {
  Eigen::VectorXd out(dim_);
  int idx = 0;
  if (has_theta) {
    for (int c = 0; c < n_countries; ++c) {
      for (int m = 0; m < n_methods; ++m) out(idx++) = state.country.theta(c, m);
    }
  }
  for (int p = 0; p < n_regions; ++p) {
    for (int m = 0; m < n_methods; ++m) out(idx++) = state.region.alpha(p, m);
  }
  for (int p = 0; p < n_regions; ++p) {
    const auto& coeffs = has_delta ? state.region.delta[p] : state.ext.beta[p];
    for (int m = 0; m < n_methods; ++m) {
      for (int k = 0; k < coeff_len[p]; ++k) out(idx++) = coeffs[m](k);
    }
  }
  if (has_sigma_theta) {
    pack_vech(state.global.sigma_theta, out.data() + idx);
    idx += vech_size(n_methods);
  }
  if (has_sigma_alpha) {
    pack_vech(state.global.sigma_alpha, out.data() + idx);
    idx += vech_size(n_methods);
  }
  if (has_sd_theta) {
    for (int m = 0; m < n_methods; ++m) out(idx++) = state.ext.sd_theta(m);
    for (int m = 0; m < n_methods; ++m) out(idx++) = state.ext.sd_alpha(m);
  }
  if (has_sigma_delta) out(idx++) = state.global.sigma_delta;
  if (has_sigma_delta_mv) {
    pack_vech(state.ext.sigma_delta_mv, out.data() + idx);
    idx += vech_size(n_methods);
  }
  if (has_sigma_beta_mv) {
    pack_vech(state.ext.sigma_beta_mv, out.data() + idx);
    idx += vech_size(n_methods);
  }
  if (has_shrinkage) {
    for (int m = 0; m < n_methods; ++m) out(idx++) = state.ext.shrink.sigma_beta(m);
    for (int m = 0; m < n_methods; ++m) out(idx++) = state.ext.shrink.xi2(m);
    for (int m = 0; m < n_methods; ++m) out(idx++) = state.ext.shrink.kappa2(m);
    out(idx++) = state.ext.shrink.a_xi;
    out(idx++) = state.ext.shrink.c_xi;
    out(idx++) = state.ext.shrink.kappa_b2;
  }
  return out;
}

void ParamRegistry::unpack(const Eigen::VectorXd& draw, ParameterState* state) const {
  int idx = 0;
  if (has_theta) {
    for (int c = 0; c < n_countries; ++c) {
      for (int m = 0; m < n_methods; ++m) state->country.theta(c, m) = draw(idx++);
    }
  }
  for (int p = 0; p < n_regions; ++p) {
    for (int m = 0; m < n_methods; ++m) state->region.alpha(p, m) = draw(idx++);
  }
  for (int p = 0; p < n_regions; ++p) {
    auto& coeffs = has_delta ? state->region.delta[p] : state->ext.beta[p];
    for (int m = 0; m < n_methods; ++m) {
      for (int k = 0; k < coeff_len[p]; ++k) coeffs[m](k) = draw(idx++);
    }
  }
  if (has_sigma_theta) {
    unpack_vech(draw.data() + idx, &state->global.sigma_theta);
    idx += vech_size(n_methods);
  }
  if (has_sigma_alpha) {
    unpack_vech(draw.data() + idx, &state->global.sigma_alpha);
    idx += vech_size(n_methods);
  }
  if (has_sd_theta) {
    for (int m = 0; m < n_methods; ++m) state->ext.sd_theta(m) = draw(idx++);
    for (int m = 0; m < n_methods; ++m) state->ext.sd_alpha(m) = draw(idx++);
  }
  if (has_sigma_delta) state->global.sigma_delta = draw(idx++);
  if (has_sigma_delta_mv) {
    unpack_vech(draw.data() + idx, &state->ext.sigma_delta_mv);
    idx += vech_size(n_methods);
  }
  if (has_sigma_beta_mv) {
    unpack_vech(draw.data() + idx, &state->ext.sigma_beta_mv);
    idx += vech_size(n_methods);
  }
  if (has_shrinkage) {
    for (int m = 0; m < n_methods; ++m) state->ext.shrink.sigma_beta(m) = draw(idx++);
    for (int m = 0; m < n_methods; ++m) state->ext.shrink.xi2(m) = draw(idx++);
    for (int m = 0; m < n_methods; ++m) state->ext.shrink.kappa2(m) = draw(idx++);
    state->ext.shrink.a_xi = draw(idx++);
    state->ext.shrink.c_xi = draw(idx++);
    state->ext.shrink.kappa_b2 = draw(idx++);
  }
}

std::vector<Eigen::VectorXd> DrawStore::column(const std::string& scalar_name) const {
  const int idx = registry.index_of(scalar_name);
  std::vector<Eigen::VectorXd> out;
  out.reserve(chains.size());
  for (const auto& chain : chains) out.push_back(chain.col(idx));
  return out;
}

// --- initialization ------------------------------------------------------------

namespace {

ParameterState make_shaped_state(const ModelSpec& spec, const ModelData& data) {
  const int M = data.n_methods();
  const int C = data.n_countries();
  const int P = data.n_regions();
  ParameterState st;
  st.country.theta = Eigen::MatrixXd::Zero(C, M);
  st.region.alpha = Eigen::MatrixXd::Zero(P, M);
  st.global.sigma_theta = spec.fixed.sigma_theta.value_or(Eigen::MatrixXd::Identity(M, M));
  st.global.sigma_alpha = spec.fixed.sigma_alpha.value_or(Eigen::MatrixXd::Identity(M, M));
  st.global.sigma_delta = spec.fixed.sigma_delta.value_or(0.1);
  if (spec.fixed.theta) st.country.theta = *spec.fixed.theta;

  if (spec.anchored()) {
    st.region.delta.resize(P);
    for (int p = 0; p < P; ++p) {
      st.region.delta[p].assign(M, Eigen::VectorXd::Zero(data.coeff_count(p) - 1));
    }
  } else {
    st.ext.beta.resize(P);
    for (int p = 0; p < P; ++p) {
      st.ext.beta[p].assign(M, Eigen::VectorXd::Zero(data.coeff_count(p)));
    }
  }
  if (!spec.full_intercept_cov()) {
    st.ext.sd_theta = Eigen::VectorXd::Ones(M);
    st.ext.sd_alpha = Eigen::VectorXd::Ones(M);
  }
  if (spec.family == ModelFamily::multivariate_delta) {
    st.ext.sigma_delta_mv =
        spec.fixed.sigma_delta_mv.value_or(Eigen::MatrixXd::Identity(M, M));
  }
  if (spec.family == ModelFamily::fully_multivariate) {
    st.ext.sigma_beta_mv =
        spec.fixed.sigma_beta_mv.value_or(Eigen::MatrixXd::Identity(M, M));
  }
  if (spec.family == ModelFamily::shrinkage) {
    st.ext.shrink.sigma_beta =
        Eigen::VectorXd::Constant(M, spec.fixed.sigma_beta.value_or(0.5));
    st.ext.shrink.xi2 = Eigen::VectorXd::Ones(M);
    st.ext.shrink.kappa2 = Eigen::VectorXd::Ones(M);
  }
  return st;
}

}  // namespace

ParameterState initialize(const ModelSpec& spec, const ModelData& data,
                          std::uint64_t /*seed*/) {
  ParameterState st = make_shaped_state(spec, data);
  const int M = data.n_methods();
  const int C = data.n_countries();
  const int P = data.n_regions();

  // Level starts at the most recent logit observation of the cell.
  Eigen::MatrixXd filled = Eigen::MatrixXd::Zero(P, M);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> have(P, M);
  have.setConstant(false);
  for (int p = 0; p < P; ++p) {
    for (int m = 0; m < M; ++m) {
      const CellObservations& cell = data.cells[p][m];
      int best_row = -1;
      for (int i = 0; i < cell.n(); ++i) {
        if (best_row < 0 || cell.grid_rows[i] > cell.grid_rows[best_row]) {
          best_row = i;
        }
      }
      if (best_row >= 0) {
        filled(p, m) = cell.z(best_row);
        have(p, m) = true;
      }
    }
  }
  // Fall back to the country mean, then zero.
  for (int c = 0; c < C; ++c) {
    for (int m = 0; m < M; ++m) {
      double sum = 0.0;
      int n = 0;
      for (int p = 0; p < P; ++p) {
        if (data.region_country[p] == c && have(p, m)) {
          sum += filled(p, m);
          ++n;
        }
      }
      const double country_mean = n > 0 ? sum / n : 0.0;
      for (int p = 0; p < P; ++p) {
        if (data.region_country[p] == c && !have(p, m)) {
          filled(p, m) = country_mean;
        }
      }
      if (!spec.fixed.theta) st.country.theta(c, m) = country_mean;
    }
  }
  st.region.alpha = filled;
  return st;
}

// --- the Gibbs engine ------------------------------------------------------------

namespace {

class GibbsEngine {
 public:
  GibbsEngine(const ModelSpec& spec, const ModelData& data)
      : spec_(spec), data_(data), registry_(ParamRegistry::build(spec, data)) {
    const int C = data_.n_countries();
    regions_of_country_.resize(C);
    for (int p = 0; p < data_.n_regions(); ++p) {
      regions_of_country_[data_.region_country[p]].push_back(p);
    }
    if (!spec_.anchored()) {
      const int P = data_.n_regions();
      rw_q_.resize(P);
      rw_qf_const_.resize(P);
      for (int p = 0; p < P; ++p) {
        rw_q_[p] = rw1_precision(data_.coeff_count(p));
        rw_qf_const_[p] = 0.0;
      }
    }
  }

  const ParamRegistry& registry() const { return registry_; }

  DrawStore run(const SamplerConfig& config) const {
    config.validate();
    DrawStore store;
    store.model_name = spec_.name;
    store.family = spec_.family;
    store.k_star_mode = spec_.k_star_mode;
    store.methods = data_.methods;
    store.config = config;
    store.registry = registry_;
    store.chains.resize(config.chains);
    for (int c = 0; c < config.chains; ++c) {
      store.chain_seeds.push_back(config.seed + static_cast<std::uint64_t>(c));
    }

    auto run_one = [&](int chain) {
      return run_chain(config, store.chain_seeds[chain]);
    };
    if (config.parallel_chains && config.chains > 1) {
      std::vector<std::future<Eigen::MatrixXd>> futures;
      for (int c = 0; c < config.chains; ++c) {
        futures.push_back(std::async(std::launch::async, run_one, c));
      }
      for (int c = 0; c < config.chains; ++c) store.chains[c] = futures[c].get();
    } else {
      for (int c = 0; c < config.chains; ++c) store.chains[c] = run_one(c);
    }
    for (const auto& block : registry_.blocks()) {
      store.acceptance_rates[block.id] = 1.0;  // conjugate and slice updates
    }
    return store;
  }

 private:
  Eigen::MatrixXd run_chain(const SamplerConfig& config, std::uint64_t seed) const {
    Rng rng(seed);
    ParameterState state = initialize(spec_, data_, seed);
    check_finite_start(state);

    std::map<std::string, double> widths;
    const long kept_target = config.kept_per_chain();
    Eigen::MatrixXd kept(kept_target, registry_.dim());
    long kept_count = 0;
    for (long iter = 1; iter <= config.iterations; ++iter) {
      const bool adapt = iter <= config.burn_in;
      sweep(state, rng, widths, adapt, config.slice_width);
      if (iter > config.burn_in && (iter - config.burn_in) % config.thin == 0 &&
          kept_count < kept_target) {
        kept.row(kept_count++) = registry_.pack(state).transpose();
      }
    }
    return kept;
  }

  void check_finite_start(const ParameterState& state) const {
    auto terms = model_log_prior_terms(spec_, data_, state);
    const auto lik = model_log_likelihood_terms(spec_, data_, state);
    terms.insert(terms.end(), lik.begin(), lik.end());
    for (const auto& [name, value] : terms) {
      if (!std::isfinite(value)) {
        throw Error("non-finite log-density at initialization: " + name);
      }
    }
  }

  double slice_width_for(std::map<std::string, double>& widths, const std::string& key,
                         double fallback) const {
    const auto it = widths.find(key);
    return it == widths.end() ? fallback : it->second;
  }

  void adapt_width(std::map<std::string, double>& widths, const std::string& key,
                   double interval, double fallback, bool adapt) const {
    if (!adapt) return;
    const double current = slice_width_for(widths, key, fallback);
    widths[key] = std::clamp(0.9 * current + 0.1 * interval, 1e-4, 1e4);
  }

  void slice_update(double* x, const std::function<double(double)>& logp, Rng& rng,
                    std::map<std::string, double>& widths, const std::string& key,
                    double fallback, bool adapt) const {
    double interval = fallback;
    *x = slice_sample(logp, *x, slice_width_for(widths, key, fallback), rng,
                      &interval);
    adapt_width(widths, key, interval, fallback, adapt);
  }

  void sweep(ParameterState& st, Rng& rng, std::map<std::string, double>& widths,
             bool adapt, double w0) const {
    switch (spec_.family) {
      case ModelFamily::multivariate_intercept:
        update_intercept_cov(st, rng);
        update_theta_mvn(st, rng);
        update_alpha_mvn(st, rng, /*use_beta=*/false);
        update_delta_iid(st, rng);
        update_sigma_delta(st, rng, widths, adapt, w0);
        break;
      case ModelFamily::zero_covariance:
        update_intercept_sds(st, rng, widths, adapt, w0);
        update_theta_scalar(st, rng);
        update_alpha_scalar(st, rng, /*use_beta=*/false);
        update_delta_iid(st, rng);
        update_sigma_delta(st, rng, widths, adapt, w0);
        break;
      case ModelFamily::multivariate_delta:
        update_intercept_sds(st, rng, widths, adapt, w0);
        update_theta_scalar(st, rng);
        update_alpha_scalar(st, rng, /*use_beta=*/false);
        update_sigma_delta_mv(st, rng);
        update_delta_mv(st, rng);
        break;
      case ModelFamily::shrinkage:
        update_intercept_sds(st, rng, widths, adapt, w0);
        update_theta_scalar(st, rng);
        update_alpha_scalar(st, rng, /*use_beta=*/true);
        update_beta_shrinkage(st, rng);
        update_shrinkage_hypers(st, rng, widths, adapt, w0);
        break;
      case ModelFamily::fully_multivariate:
        update_intercept_cov(st, rng);
        update_theta_mvn(st, rng);
        update_alpha_mvn(st, rng, /*use_beta=*/true);
        update_sigma_beta_mv(st, rng);
        update_beta_fully_mv(st, rng);
        break;
    }
  }

  // Sigma_theta, Sigma_alpha: conjugate inverse-Wishart.
  void update_intercept_cov(ParameterState& st, Rng& rng) const {
    const int M = data_.n_methods();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(M, M);
    if (!spec_.fixed.sigma_theta) {
      Eigen::MatrixXd scale = eye;
      for (int c = 0; c < data_.n_countries(); ++c) {
        const Eigen::VectorXd t = st.country.theta.row(c).transpose();
        scale += t * t.transpose();
      }
      st.global.sigma_theta =
          rng.inverse_wishart(M + 1 + data_.n_countries(), scale);
    }
    if (!spec_.fixed.sigma_alpha) {
      Eigen::MatrixXd scale = eye;
      for (int p = 0; p < data_.n_regions(); ++p) {
        const Eigen::VectorXd r =
            st.region.alpha.row(p).transpose() -
            st.country.theta.row(data_.region_country[p]).transpose();
        scale += r * r.transpose();
      }
      st.global.sigma_alpha = rng.inverse_wishart(M + 1 + data_.n_regions(), scale);
    }
  }

  void update_theta_mvn(ParameterState& st, Rng& rng) const {
    if (spec_.fixed.theta) return;
    const int M = data_.n_methods();
    const Eigen::MatrixXd theta_prec =
        st.global.sigma_theta.llt().solve(Eigen::MatrixXd::Identity(M, M));
    const Eigen::MatrixXd alpha_prec =
        st.global.sigma_alpha.llt().solve(Eigen::MatrixXd::Identity(M, M));
    for (int c = 0; c < data_.n_countries(); ++c) {
      const auto& members = regions_of_country_[c];
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(M);
      for (int p : members) sum += st.region.alpha.row(p).transpose();
      const Eigen::MatrixXd lambda =
          theta_prec + static_cast<double>(members.size()) * alpha_prec;
      const Eigen::VectorXd eta = alpha_prec * sum;
      st.country.theta.row(c) = rng.mvn_from_canonical(eta, lambda).transpose();
    }
  }

  void update_theta_scalar(ParameterState& st, Rng& rng) const {
    if (spec_.fixed.theta) return;
    for (int c = 0; c < data_.n_countries(); ++c) {
      const auto& members = regions_of_country_[c];
      for (int m = 0; m < data_.n_methods(); ++m) {
        const double v_theta = st.ext.sd_theta(m) * st.ext.sd_theta(m);
        const double v_alpha = st.ext.sd_alpha(m) * st.ext.sd_alpha(m);
        double prec = 1.0 / v_theta + static_cast<double>(members.size()) / v_alpha;
        double eta = 0.0;
        for (int p : members) eta += st.region.alpha(p, m) / v_alpha;
        st.country.theta(c, m) = rng.normal(eta / prec, std::sqrt(1.0 / prec));
      }
    }
  }

  double likelihood_offset(const ParameterState& st, int p, int m,
                           bool use_beta) const {
    const CellObservations& cell = data_.cells[p][m];
    if (cell.n() == 0) return 0.0;
    return use_beta ? cell.u_beta.dot(st.ext.beta[p][m])
                    : cell.u_delta.dot(st.region.delta[p][m]);
  }

  void update_alpha_mvn(ParameterState& st, Rng& rng, bool use_beta) const {
    const int M = data_.n_methods();
    const Eigen::MatrixXd alpha_prec =
        st.global.sigma_alpha.llt().solve(Eigen::MatrixXd::Identity(M, M));
    for (int p = 0; p < data_.n_regions(); ++p) {
      Eigen::MatrixXd lambda = alpha_prec;
      Eigen::VectorXd eta =
          alpha_prec * st.country.theta.row(data_.region_country[p]).transpose();
      for (int m = 0; m < M; ++m) {
        const CellObservations& cell = data_.cells[p][m];
        lambda(m, m) += cell.prec_sum;
        eta(m) += cell.prec_z_sum - likelihood_offset(st, p, m, use_beta);
      }
      st.region.alpha.row(p) = rng.mvn_from_canonical(eta, lambda).transpose();
    }
  }

  void update_alpha_scalar(ParameterState& st, Rng& rng, bool use_beta) const {
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int c = data_.region_country[p];
      for (int m = 0; m < data_.n_methods(); ++m) {
        const CellObservations& cell = data_.cells[p][m];
        const double v_alpha = st.ext.sd_alpha(m) * st.ext.sd_alpha(m);
        const double prec = 1.0 / v_alpha + cell.prec_sum;
        const double eta = st.country.theta(c, m) / v_alpha + cell.prec_z_sum -
                           likelihood_offset(st, p, m, use_beta);
        st.region.alpha(p, m) = rng.normal(eta / prec, std::sqrt(1.0 / prec));
      }
    }
  }

  void update_delta_iid(ParameterState& st, Rng& rng) const {
    const double var = st.global.sigma_delta * st.global.sigma_delta;
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int len = data_.coeff_count(p) - 1;
      for (int m = 0; m < data_.n_methods(); ++m) {
        const CellObservations& cell = data_.cells[p][m];
        Eigen::MatrixXd lambda =
            Eigen::MatrixXd::Identity(len, len) / var;
        Eigen::VectorXd eta = Eigen::VectorXd::Zero(len);
        if (cell.n() > 0) {
          lambda += cell.G_delta;
          eta = cell.xz_delta - st.region.alpha(p, m) * cell.u_delta;
        }
        st.region.delta[p][m] = rng.mvn_from_canonical(eta, lambda);
      }
    }
  }

  void update_sigma_delta(ParameterState& st, Rng& rng,
                          std::map<std::string, double>& widths, bool adapt,
                          double w0) const {
    if (spec_.fixed.sigma_delta) return;
    double count = 0.0;
    double sum_sq = 0.0;
    for (int p = 0; p < data_.n_regions(); ++p) {
      for (int m = 0; m < data_.n_methods(); ++m) {
        count += static_cast<double>(st.region.delta[p][m].size());
        sum_sq += st.region.delta[p][m].squaredNorm();
      }
    }
    auto logp = [&](double sd) {
      if (!(sd > 0.0)) return -std::numeric_limits<double>::infinity();
      return log_half_normal_pdf(sd, 2.0) - count * std::log(sd) -
             0.5 * sum_sq / (sd * sd);
    };
    slice_update(&st.global.sigma_delta, logp, rng, widths, "sigma_delta", w0, adapt);
  }

  void update_intercept_sds(ParameterState& st, Rng& rng,
                            std::map<std::string, double>& widths, bool adapt,
                            double w0) const {
    const bool cauchy_country = spec_.family == ModelFamily::shrinkage;
    for (int m = 0; m < data_.n_methods(); ++m) {
      {
        double sum_sq = 0.0;
        for (int c = 0; c < data_.n_countries(); ++c) {
          sum_sq += st.country.theta(c, m) * st.country.theta(c, m);
        }
        const double n = data_.n_countries();
        auto logp = [&](double sd) {
          if (!(sd > 0.0)) return -std::numeric_limits<double>::infinity();
          const double prior = cauchy_country ? log_half_cauchy_pdf(sd, 1.0)
                                              : log_half_normal_pdf(sd, 2.0);
          return prior - n * std::log(sd) - 0.5 * sum_sq / (sd * sd);
        };
        double sd = st.ext.sd_theta(m);
        slice_update(&sd, logp, rng, widths, "sd_theta[" + std::to_string(m) + "]",
                     w0, adapt);
        st.ext.sd_theta(m) = sd;
      }
      {
        double sum_sq = 0.0;
        for (int p = 0; p < data_.n_regions(); ++p) {
          const double r =
              st.region.alpha(p, m) - st.country.theta(data_.region_country[p], m);
          sum_sq += r * r;
        }
        const double n = data_.n_regions();
        auto logp = [&](double sd) {
          if (!(sd > 0.0)) return -std::numeric_limits<double>::infinity();
          return log_half_normal_pdf(sd, 2.0) - n * std::log(sd) -
                 0.5 * sum_sq / (sd * sd);
        };
        double sd = st.ext.sd_alpha(m);
        slice_update(&sd, logp, rng, widths, "sd_alpha[" + std::to_string(m) + "]",
                     w0, adapt);
        st.ext.sd_alpha(m) = sd;
      }
    }
  }

  void update_sigma_delta_mv(ParameterState& st, Rng& rng) const {
    if (spec_.fixed.sigma_delta_mv) return;
    const int M = data_.n_methods();
    Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(M, M);
    double steps = 0.0;
    Eigen::VectorXd v(M);
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int len = data_.coeff_count(p) - 1;
      steps += len;
      for (int k = 0; k < len; ++k) {
        for (int m = 0; m < M; ++m) v(m) = st.region.delta[p][m](k);
        scale += v * v.transpose();
      }
    }
    st.ext.sigma_delta_mv = rng.inverse_wishart(M + 1 + steps, scale);
  }

  void update_delta_mv(ParameterState& st, Rng& rng) const {
    const int M = data_.n_methods();
    const Eigen::MatrixXd delta_prec =
        st.ext.sigma_delta_mv.llt().solve(Eigen::MatrixXd::Identity(M, M));
    Eigen::VectorXd eta(M);
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int len = data_.coeff_count(p) - 1;
      for (int k = 0; k < len; ++k) {
        Eigen::MatrixXd lambda = delta_prec;
        for (int m = 0; m < M; ++m) {
          const CellObservations& cell = data_.cells[p][m];
          double e = 0.0;
          if (cell.n() > 0) {
            lambda(m, m) += cell.G_delta(k, k);
            e = cell.xz_delta(k) - st.region.alpha(p, m) * cell.u_delta(k) -
                (cell.G_delta.row(k).dot(st.region.delta[p][m]) -
                 cell.G_delta(k, k) * st.region.delta[p][m](k));
          }
          eta(m) = e;
        }
        const Eigen::VectorXd draw = rng.mvn_from_canonical(eta, lambda);
        for (int m = 0; m < M; ++m) st.region.delta[p][m](k) = draw(m);
      }
    }
  }

  // One sum-to-zero constraint via conditioning-by-kriging.
  static Eigen::VectorXd apply_sum_to_zero(const Eigen::VectorXd& x,
                                           const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::VectorXd v = llt.solve(Eigen::VectorXd::Ones(x.size()));
    return x - v * (x.sum() / v.sum());
  }

  void update_beta_shrinkage(ParameterState& st, Rng& rng) const {
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int K = data_.coeff_count(p);
      for (int m = 0; m < data_.n_methods(); ++m) {
        const CellObservations& cell = data_.cells[p][m];
        const double sd = st.ext.shrink.sigma_beta(m);
        Eigen::MatrixXd lambda = rw_q_[p] / (sd * sd);
        Eigen::VectorXd eta = Eigen::VectorXd::Zero(K);
        if (cell.n() > 0) {
          lambda += cell.G_beta;
          eta = cell.xz_beta - st.region.alpha(p, m) * cell.u_beta;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(lambda);
        const Eigen::VectorXd mu = llt.solve(eta);
        const Eigen::VectorXd x =
            mu + llt.matrixU().solve(rng.normal_vector(K));
        st.ext.beta[p][m] = apply_sum_to_zero(x, llt);
      }
    }
  }

  void update_shrinkage_hypers(ParameterState& st, Rng& rng,
                               std::map<std::string, double>& widths, bool adapt,
                               double w0) const {
    if (spec_.fixed.sigma_beta) return;
    ShrinkageParams& sp = st.ext.shrink;
    const int M = data_.n_methods();

    for (int m = 0; m < M; ++m) {
      // sigma_beta[m]: half-normal(0, xi2) prior, constrained RW1 likelihood.
      double count = 0.0;
      double qf = 0.0;
      for (int p = 0; p < data_.n_regions(); ++p) {
        count += data_.coeff_count(p) - 1;  // sum-to-zero removes one dimension
        qf += st.ext.beta[p][m].dot(rw_q_[p] * st.ext.beta[p][m]);
      }
      const double xi2 = sp.xi2(m);
      auto logp_sd = [&](double sd) {
        if (!(sd > 0.0)) return -std::numeric_limits<double>::infinity();
        return log_half_normal_pdf(sd, std::sqrt(xi2)) - count * std::log(sd) -
               0.5 * qf / (sd * sd);
      };
      double sd = sp.sigma_beta(m);
      slice_update(&sd, logp_sd, rng, widths, "sigma_beta[" + std::to_string(m) + "]",
                   w0, adapt);
      sp.sigma_beta(m) = sd;

      // xi2[m]: Gamma prior against the half-normal scale of sigma_beta.
      const double sb2 = sp.sigma_beta(m) * sp.sigma_beta(m);
      const double a = sp.a_xi;
      const double kap = sp.kappa2(m);
      auto logp_xi = [&](double x) {
        if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
        return log_gamma_pdf(x, a, 0.5 * a * kap) - 0.5 * std::log(x) -
               0.5 * sb2 / x;
      };
      double xi = sp.xi2(m);
      slice_update(&xi, logp_xi, rng, widths, "xi2[" + std::to_string(m) + "]", w0,
                   adapt);
      sp.xi2(m) = xi;

      // kappa2[m] is conjugate gamma.
      sp.kappa2(m) = rng.gamma(sp.c_xi + sp.a_xi,
                               sp.c_xi / sp.kappa_b2 + 0.5 * sp.a_xi * sp.xi2(m));
    }

    {
      auto logp_a = [&](double a) {
        if (a <= 0.0 || a >= 0.5) return -std::numeric_limits<double>::infinity();
        double t = log_beta_pdf(2.0 * a, 5.0, 10.0);
        for (int m = 0; m < M; ++m) {
          t += log_gamma_pdf(sp.xi2(m), a, 0.5 * a * sp.kappa2(m));
        }
        return t;
      };
      slice_update(&sp.a_xi, logp_a, rng, widths, "a_xi", 0.1, adapt);
    }
    {
      auto logp_c = [&](double c) {
        if (c <= 0.0 || c >= 1.0) return -std::numeric_limits<double>::infinity();
        double t = log_beta_pdf(2.0 * c, 5.0, 2.0);
        for (int m = 0; m < M; ++m) {
          t += log_gamma_pdf(sp.kappa2(m), c, c / sp.kappa_b2);
        }
        return t;
      };
      slice_update(&sp.c_xi, logp_c, rng, widths, "c_xi", 0.1, adapt);
    }
    {
      auto logp_kb = [&](double kb2) {
        if (!(kb2 > 0.0)) return -std::numeric_limits<double>::infinity();
        double t = log_f_pdf(0.5 * kb2, 1.0, 1.0);
        for (int m = 0; m < M; ++m) {
          t += log_gamma_pdf(sp.kappa2(m), sp.c_xi, sp.c_xi / kb2);
        }
        return t;
      };
      slice_update(&sp.kappa_b2, logp_kb, rng, widths, "kappa_b2", w0, adapt);
    }
  }

  void update_sigma_beta_mv(ParameterState& st, Rng& rng) const {
    if (spec_.fixed.sigma_beta_mv) return;
    const int M = data_.n_methods();
    Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(M, M);
    double df = M + 1;
    Eigen::VectorXd v(M), w(M);
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int K = data_.coeff_count(p);
      df += K - 1;  // one dimension absorbed by each method's sum-to-zero
      for (int m = 0; m < M; ++m) v(m) = st.ext.beta[p][m](0);
      scale += v * v.transpose();
      for (int k = 1; k < K; ++k) {
        for (int m = 0; m < M; ++m) {
          w(m) = st.ext.beta[p][m](k) - st.ext.beta[p][m](k - 1);
        }
        scale += w * w.transpose();
      }
    }
    st.ext.sigma_beta_mv = rng.inverse_wishart(df, scale);
  }

  void update_beta_fully_mv(ParameterState& st, Rng& rng) const {
    const int M = data_.n_methods();
    const Eigen::MatrixXd sigma_inv =
        st.ext.sigma_beta_mv.llt().solve(Eigen::MatrixXd::Identity(M, M));
    for (int p = 0; p < data_.n_regions(); ++p) {
      const int K = data_.coeff_count(p);
      const int dim = K * M;
      Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(dim);
      // Prior: Q  (x)  Sigma_beta^-1 with method index fastest.
      for (int k = 0; k < K; ++k) {
        for (int kk = 0; kk < K; ++kk) {
          const double q = rw_q_[p](k, kk);
          if (q == 0.0) continue;
          lambda.block(k * M, kk * M, M, M) += q * sigma_inv;
        }
      }
      for (int m = 0; m < M; ++m) {
        const CellObservations& cell = data_.cells[p][m];
        if (cell.n() == 0) continue;
        for (int k = 0; k < K; ++k) {
          for (int kk = 0; kk < K; ++kk) {
            lambda(k * M + m, kk * M + m) += cell.G_beta(k, kk);
          }
          eta(k * M + m) +=
              cell.xz_beta(k) - st.region.alpha(p, m) * cell.u_beta(k);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(lambda);
      const Eigen::VectorXd mu = llt.solve(eta);
      Eigen::VectorXd x = mu + llt.matrixU().solve(rng.normal_vector(dim));

      // M sum-to-zero constraints, one per method.
      Eigen::MatrixXd a_t = Eigen::MatrixXd::Zero(dim, M);
      for (int m = 0; m < M; ++m) {
        for (int k = 0; k < K; ++k) a_t(k * M + m, m) = 1.0;
      }
      const Eigen::MatrixXd v = llt.solve(a_t);
      const Eigen::MatrixXd s = a_t.transpose() * v;
      const Eigen::VectorXd c = a_t.transpose() * x;
      x -= v * s.llt().solve(c);

      for (int m = 0; m < M; ++m) {
        for (int k = 0; k < K; ++k) st.ext.beta[p][m](k) = x(k * M + m);
      }
    }
  }

  const ModelSpec spec_;
  const ModelData& data_;
  ParamRegistry registry_;
  std::vector<std::vector<int>> regions_of_country_;
  std::vector<Eigen::MatrixXd> rw_q_;
  std::vector<double> rw_qf_const_;
};

}  // namespace

DrawStore run_chains(const ModelSpec& spec, const ModelData& data,
                     const SamplerConfig& config) {
  spec.validate();
  GibbsEngine engine(spec, data);
  return engine.run(config);
}

}  // namespace ssp
