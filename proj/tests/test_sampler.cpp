#include <doctest.h>

#include <cmath>

#include "ssp/sampler.hpp"
#include "ssp/simulate.hpp"
#include "ssp/stats.hpp"

using namespace ssp;

namespace {

/// One region, one method, one observation at the anchor year with degree-1
/// splines: the observation loads on the anchored coefficient alone, so the
/// level has a closed-form normal posterior.
struct ConjugateToy {
  Dataset dataset;
  ModelData data;
  ModelSpec spec;
  double z;       // logit observation
  double se;      // logit SE
  double v0;      // prior variance of the level (theta marginalized)
};

ConjugateToy make_conjugate_toy() {
  const double z = 0.9;
  const double se = 0.5;
  const double y = inverse_logit(z);
  std::vector<Observation> obs = {
      {"a", "a_r", Method::pill, 2015, y, se * y * (1.0 - y)}};
  ConjugateToy toy{Dataset::from_observations(obs, {1995, 2030}), ModelData{},
                   ModelSpec{}, z, se, 2.0};
  SplineConfig spline;
  spline.degree = 1;
  spline.knot_spacing = 5.0;
  toy.data = ModelData::build(toy.dataset, spline);
  toy.spec = build_multivariate_intercept();
  toy.spec.fixed.sigma_theta = Eigen::MatrixXd::Identity(1, 1);
  toy.spec.fixed.sigma_alpha = Eigen::MatrixXd::Identity(1, 1);
  toy.spec.fixed.sigma_delta = 0.3;
  return toy;
}

std::vector<Eigen::VectorXd> merged_column(const DrawStore& draws,
                                           const std::string& name) {
  return draws.column(name);
}

double merged_mean(const DrawStore& draws, const std::string& name) {
  double sum = 0.0;
  long n = 0;
  for (const auto& col : merged_column(draws, name)) {
    sum += col.sum();
    n += col.size();
  }
  return sum / static_cast<double>(n);
}

double merged_variance(const DrawStore& draws, const std::string& name) {
  const double m = merged_mean(draws, name);
  double ss = 0.0;
  long n = 0;
  for (const auto& col : merged_column(draws, name)) {
    ss += (col.array() - m).square().sum();
    n += col.size();
  }
  return ss / static_cast<double>(n - 1);
}

}  // namespace

TEST_CASE("sampler schedule validation") {
  SamplerConfig cfg;
  SUBCASE("the default schedule keeps exactly 2000 draws per chain") {
    CHECK(cfg.iterations == 80000);
    CHECK(cfg.burn_in == 10000);
    CHECK(cfg.thin == 35);
    CHECK(cfg.kept_per_chain() == 2000);
    cfg.validate();
  }
  SUBCASE("burn-in equal to iterations is rejected") {
    cfg.iterations = 5000;
    cfg.burn_in = 5000;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("schedules keeping fewer than 100 draws are rejected") {
    cfg.iterations = 1000;
    cfg.burn_in = 500;
    cfg.thin = 10;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("a small run keeps the scheduled number of draws") {
  SimulationTruth truth = desk_scale_scenario(31);
  truth.countries = 2;
  truth.regions_per_country = 2;
  const SimulatedData sim = simulate_dataset(truth);
  SamplerConfig cfg;
  cfg.iterations = 700;
  cfg.burn_in = 100;
  cfg.thin = 4;
  cfg.chains = 2;
  cfg.seed = 99;
  const DrawStore draws = run_chains(build_multivariate_intercept(), sim.data, cfg);
  CHECK(draws.kept() == 150);
  CHECK(draws.n_chains() == 2);
  CHECK(draws.total_draws() == 300);
  CHECK(draws.acceptance_rates.count("alpha") == 1);
}

TEST_CASE("initialization uses the data, then the country mean, then zero") {
  std::vector<Observation> obs = {
      {"a", "a_r1", Method::pill, 2010, inverse_logit(0.8),
       0.1 * inverse_logit(0.8) * (1 - inverse_logit(0.8))},
      {"a", "a_r1", Method::pill, 2002, 0.3, 0.05},
      {"a", "a_r2", Method::iud, 2011, 0.4, 0.05},
      {"b", "b_r1", Method::pill, 2008, 0.6, 0.05},
  };
  const Dataset ds = Dataset::from_observations(obs, {1995, 2030});
  const ModelData data = ModelData::build(ds, SplineConfig{});
  const ModelSpec spec = build_multivariate_intercept();
  const ParameterState st = initialize(spec, data, 1);

  const int p_r1 = 0;  // a_r1 sorts first
  const int m_pill = 1;  // methods sorted by enum order: pill < iud
  REQUIRE(data.region_ids[p_r1] == "a_r1");
  REQUIRE(data.methods[0] == Method::pill);

  SUBCASE("most recent observation wins") {
    CHECK(st.region.alpha(p_r1, 0) == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("missing method falls back to the country mean") {
    // a_r2 has no pill data; country a's only pill level is a_r1's 0.8.
    const int p_r2 = 1;
    REQUIRE(data.region_ids[p_r2] == "a_r2");
    CHECK(st.region.alpha(p_r2, 0) == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("no data anywhere in the country gives zero") {
    // Country b has no iud data at all.
    const int p_b = 2;
    REQUIRE(data.region_ids[p_b] == "b_r1");
    CHECK(st.region.alpha(p_b, 1) == 0.0);
  }
  SUBCASE("rates of change start at zero with identity covariances") {
    CHECK(st.region.delta[0][0].isZero(0.0));
    CHECK(st.global.sigma_theta.isIdentity(0.0));
    CHECK(st.global.sigma_delta == doctest::Approx(0.1));
  }
  SUBCASE("the fresh state has finite joint density") {
    CHECK(std::isfinite(log_prior(data, st)));
    CHECK(std::isfinite(log_likelihood(data, st)));
  }
  (void)m_pill;
}

TEST_CASE("identical seeds reproduce the draws bit for bit") {
  SimulationTruth truth = desk_scale_scenario(32);
  truth.countries = 2;
  truth.regions_per_country = 2;
  const SimulatedData sim = simulate_dataset(truth);
  SamplerConfig cfg;
  cfg.iterations = 600;
  cfg.burn_in = 100;
  cfg.thin = 5;
  cfg.chains = 2;
  cfg.seed = 41;
  const DrawStore a = run_chains(build_multivariate_intercept(), sim.data, cfg);
  const DrawStore b = run_chains(build_multivariate_intercept(), sim.data, cfg);
  REQUIRE(a.n_chains() == b.n_chains());
  for (int c = 0; c < a.n_chains(); ++c) {
    CHECK((a.chains[c] - b.chains[c]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("conjugate toy matches the closed-form posterior") {
  const ConjugateToy toy = make_conjugate_toy();
  SamplerConfig cfg;
  cfg.iterations = 26000;
  cfg.burn_in = 1000;
  cfg.thin = 5;
  cfg.chains = 2;
  cfg.seed = 7;
  const DrawStore draws = run_chains(toy.spec, toy.data, cfg);

  const double v_post = toy.v0 * toy.se * toy.se / (toy.v0 + toy.se * toy.se);
  const double m_post = toy.z * toy.v0 / (toy.v0 + toy.se * toy.se);

  const std::string name = "alpha[a_r,pill]";
  const double mean_hat = merged_mean(draws, name);
  const double var_hat = merged_variance(draws, name);
  const double ess = effective_sample_size(draws.column(name));
  REQUIRE(ess > 200);
  const double mcse_mean = std::sqrt(var_hat / ess);
  const double mcse_var = var_hat * std::sqrt(2.0 / ess);
  CHECK(std::abs(mean_hat - m_post) < 3.0 * mcse_mean);
  CHECK(std::abs(var_hat - v_post) < 3.0 * mcse_var);
}

TEST_CASE("inverse-Wishart conditional matches the analytic posterior mean") {
  // Pin the country levels to synthetic values; the covariance conditional is
  // then sampled i.i.d. from its exact posterior every sweep.
  const int C = 30;
  const int M = 2;
  Rng rng(55);
  Eigen::MatrixXd theta(C, M);
  for (int c = 0; c < C; ++c) {
    theta(c, 0) = rng.normal(0.0, 1.0);
    theta(c, 1) = 0.6 * theta(c, 0) + 0.8 * rng.normal(0.0, 1.0);
  }

  std::vector<Observation> obs;
  for (int c = 0; c < C; ++c) {
    const std::string country = (c < 10 ? "c0" : "c") + std::to_string(c);
    for (Method m : {Method::pill, Method::iud}) {
      obs.push_back({country, country + "_r", m, 2010, 0.5, 0.05});
    }
  }
  const Dataset ds = Dataset::from_observations(obs, {1995, 2030});
  const ModelData data = ModelData::build(ds, SplineConfig{});

  ModelSpec spec = build_multivariate_intercept();
  spec.fixed.theta = theta;
  SamplerConfig cfg;
  cfg.iterations = 10100;
  cfg.burn_in = 100;
  cfg.thin = 1;
  cfg.chains = 1;
  cfg.seed = 77;
  const DrawStore draws = run_chains(spec, data, cfg);

  const Eigen::MatrixXd scale =
      Eigen::MatrixXd::Identity(M, M) + theta.transpose() * theta;
  const Eigen::MatrixXd analytic_mean = scale / static_cast<double>(C);
  const char* names[3] = {"Sigma_theta[1,1]", "Sigma_theta[1,2]",
                          "Sigma_theta[2,2]"};
  const double analytic[3] = {analytic_mean(0, 0), analytic_mean(0, 1),
                              analytic_mean(1, 1)};
  for (int i = 0; i < 3; ++i) {
    const double got = merged_mean(draws, names[i]);
    CHECK(std::abs(got - analytic[i]) / std::abs(analytic[i]) < 0.02);
  }
}

TEST_CASE("non-finite starting density names the offending parameter") {
  SimulationTruth truth = desk_scale_scenario(33);
  truth.countries = 1;
  truth.regions_per_country = 2;
  const SimulatedData sim = simulate_dataset(truth);
  ModelSpec spec = build_multivariate_intercept();
  spec.fixed.sigma_delta = -1.0;  // outside the support
  SamplerConfig cfg;
  cfg.iterations = 300;
  cfg.burn_in = 100;
  cfg.thin = 2;
  cfg.chains = 1;
  CHECK_THROWS_WITH_AS(run_chains(spec, sim.data, cfg), doctest::Contains("delta"),
                       Error);
}

TEST_CASE("split R-hat") {
  Rng rng(202);
  const long n = 500;
  auto iid_chain = [&](double offset) {
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v(i) = offset + rng.normal(0.0, 1.0);
    return v;
  };
  SUBCASE("well-mixed chains sit at one") {
    const std::vector<Eigen::VectorXd> chains = {iid_chain(0.0), iid_chain(0.0)};
    const double r = r_hat_from_chains(chains);
    CHECK(r >= 0.99);
    CHECK(r <= 1.01);
  }
  SUBCASE("a ten-sigma offset blows past 1.5") {
    const std::vector<Eigen::VectorXd> chains = {iid_chain(0.0), iid_chain(10.0)};
    CHECK(r_hat_from_chains(chains) > 1.5);
  }
  SUBCASE("a single stationary chain splits cleanly") {
    const std::vector<Eigen::VectorXd> chains = {iid_chain(0.0)};
    CHECK(r_hat_from_chains(chains) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("constant chains return the infinity sentinel") {
    const std::vector<Eigen::VectorXd> chains = {Eigen::VectorXd::Ones(200),
                                                 Eigen::VectorXd::Ones(200)};
    CHECK(std::isinf(r_hat_from_chains(chains)));
  }
  SUBCASE("too few draws is an error") {
    const std::vector<Eigen::VectorXd> chains = {Eigen::VectorXd::Ones(20)};
    CHECK_THROWS_AS(r_hat_from_chains(chains), ConfigError);
  }
}

TEST_CASE("effective sample size is sane for independent draws") {
  Rng rng(303);
  const long n = 1000;
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v(i) = rng.normal(0.0, 1.0);
    chains.push_back(v);
  }
  const double ess = effective_sample_size(chains);
  CHECK(ess > 1000);
  CHECK(ess <= 2000);
}

TEST_CASE("convergence report covers every free parameter") {
  SimulationTruth truth = desk_scale_scenario(34);
  truth.countries = 2;
  truth.regions_per_country = 2;
  const SimulatedData sim = simulate_dataset(truth);
  SamplerConfig cfg;
  cfg.iterations = 900;
  cfg.burn_in = 300;
  cfg.thin = 3;
  cfg.chains = 2;
  cfg.seed = 6;
  const DrawStore draws = run_chains(build_multivariate_intercept(), sim.data, cfg);
  const auto report = convergence_report(draws);
  CHECK(report.size() == static_cast<std::size_t>(draws.registry.dim()));
  for (const auto& row : report) {
    CHECK(row.acceptance_rate == 1.0);
    CHECK(std::isfinite(row.ess));
  }
  // r_hat lookups by name agree with the report.
  const double direct = r_hat(draws, "sigma_delta");
  const auto it = std::find_if(report.begin(), report.end(), [](const auto& r) {
    return r.parameter == "sigma_delta";
  });
  REQUIRE(it != report.end());
  CHECK(direct == doctest::Approx(it->r_hat).epsilon(1e-12));
}
