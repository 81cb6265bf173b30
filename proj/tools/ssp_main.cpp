#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>

#include "ssp/io.hpp"
#include "ssp/posterior.hpp"
#include "ssp/sampler.hpp"
#include "ssp/simulate.hpp"
#include "ssp/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitData = 4;

struct CommonOptions {
  std::string data_path;
  std::string model = "multivariate_intercept";
  std::string out_dir = ".";
  ssp::SamplerConfig sampler;
  ssp::SplineConfig spline;
  int start_year = 1990;
  int end_year = 2030;
};

void add_sampler_flags(CLI::App* cmd, CommonOptions* opt) {
  cmd->add_option("--iterations", opt->sampler.iterations, "MCMC iterations");
  cmd->add_option("--burn-in", opt->sampler.burn_in, "burn-in iterations");
  cmd->add_option("--thin", opt->sampler.thin, "thinning interval");
  cmd->add_option("--chains", opt->sampler.chains, "number of chains");
  cmd->add_option("--seed", opt->sampler.seed, "RNG seed");
  cmd->add_flag("--serial-chains", [opt](std::int64_t) {
    opt->sampler.parallel_chains = false;
  }, "run chains sequentially");
}

void add_spline_flags(CLI::App* cmd, CommonOptions* opt) {
  cmd->add_option("--degree", opt->spline.degree, "spline degree");
  cmd->add_option("--knot-spacing", opt->spline.knot_spacing, "knot spacing, years");
  cmd->add_option("--start-year", opt->start_year, "window start");
  cmd->add_option("--end-year", opt->end_year, "window end (projection horizon)");
}

ssp::Dataset load_dataset(const CommonOptions& opt) {
  const ssp::Dataset ds = ssp::parse_dataset(
      opt.data_path, ssp::SchemaConfig{},
      ssp::TimeWindow{opt.start_year, opt.end_year});
  for (const auto& w : ds.warnings()) std::cerr << "warning: " << w << '\n';
  return ds;
}

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
  ssp::atomic_write(path, fn);
  std::cout << "wrote " << path.string() << '\n';
}

int cmd_fit(const CommonOptions& opt, bool dump_csv, bool dump_basis) {
  opt.sampler.validate();
  const ssp::Dataset ds = load_dataset(opt);
  const ssp::ModelSpec spec = ssp::model_by_name(opt.model);
  const ssp::ModelData data = ssp::ModelData::build(ds, opt.spline);
  ssp::DrawStore draws = ssp::run_chains(spec, data, opt.sampler);

  fs::create_directories(opt.out_dir);
  const ssp::FitArtifact artifact = ssp::make_artifact(std::move(draws), data);
  ssp::save_fit(fs::path(opt.out_dir) / "draws.bin", artifact);
  std::cout << "wrote " << (fs::path(opt.out_dir) / "draws.bin").string() << '\n';

  const auto report = ssp::convergence_report(artifact.draws);
  write_text(fs::path(opt.out_dir) / "convergence.json",
             [&](std::ostream& out) { ssp::write_convergence_json(out, report); });

  if (dump_csv) {
    write_text(fs::path(opt.out_dir) / "draws.csv", [&](std::ostream& out) {
      ssp::write_draws_csv(out, artifact.draws);
    });
  }
  if (dump_basis) {
    write_text(fs::path(opt.out_dir) / "basis.csv", [&](std::ostream& out) {
      out << "region_id,year,basis_index,value\n";
      out.precision(17);
      for (int p = 0; p < data.n_regions(); ++p) {
        for (int g = 0; g < data.grid_size(); ++g) {
          for (int k = 0; k < data.coeff_count(p); ++k) {
            out << data.region_ids[p] << ',' << data.grid_years[g] << ',' << k + 1
                << ',' << data.basis[p].values(g, k) << '\n';
          }
        }
      }
    });
  }

  long flagged = 0;
  for (const auto& row : report) {
    if (row.r_hat > 1.01) ++flagged;
  }
  std::cout << "parameters with split-R-hat above 1.01: " << flagged << " of "
            << report.size() << '\n';
  return kExitOk;
}

int cmd_project(const std::string& in_dir, const std::string& out_dir, int year) {
  const fs::path draws_path = fs::path(in_dir) / "draws.bin";
  if (!fs::exists(draws_path)) {
    throw ssp::MissingArtifactError("no draws at " + draws_path.string() +
                                    "; run fit first");
  }
  const ssp::FitArtifact artifact = ssp::load_fit(draws_path);
  const ssp::ModelData data = ssp::model_data_from_artifact(artifact);

  fs::create_directories(out_dir);
  const auto trajectories = ssp::summarize_trajectories(artifact.draws, data);
  write_text(fs::path(out_dir) / "trajectories.csv", [&](std::ostream& out) {
    ssp::write_trajectories_csv(out, trajectories);
  });

  const std::vector<ssp::CorrelationSummary> correlations = {
      ssp::correlation_summary(artifact.draws, ssp::CorrelationLevel::national),
      ssp::correlation_summary(artifact.draws, ssp::CorrelationLevel::subnational)};
  write_text(fs::path(out_dir) / "correlations.csv", [&](std::ostream& out) {
    ssp::write_correlations_csv(out, correlations);
  });

  const auto summary = ssp::year_summary(artifact.draws, data, year);
  write_text(fs::path(out_dir) / "year_summary.csv", [&](std::ostream& out) {
    ssp::write_year_summary_csv(out, summary, year);
  });
  return kExitOk;
}

int cmd_validate(const CommonOptions& opt, const std::vector<std::string>& models,
                 int cutoff) {
  opt.sampler.validate();
  const ssp::Dataset ds = load_dataset(opt);
  ssp::ValidationConfig vc;
  vc.cutoff_year = cutoff;
  vc.spline = opt.spline;
  vc.sampler = opt.sampler;
  for (const auto& m : models) ssp::model_by_name(m);  // fail fast on bad names
  const auto reports = ssp::run_validation(models, ds, vc);

  fs::create_directories(opt.out_dir);
  write_text(fs::path(opt.out_dir) / "validation_report.csv",
             [&](std::ostream& out) { ssp::write_validation_csv(out, reports); });
  write_text(fs::path(opt.out_dir) / "validation_report.json",
             [&](std::ostream& out) { ssp::write_validation_json(out, reports); });
  return kExitOk;
}

int cmd_simulate(const std::string& out_dir, ssp::SimulationTruth truth) {
  const ssp::SimulatedData sim = ssp::simulate_dataset(truth);
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "dataset.csv", [&](std::ostream& out) {
    out << "country_id,region_id,method,year,prop_public,se_prop\n";
    out.precision(17);
    for (const auto& obs : sim.dataset.observations()) {
      out << obs.country_id << ',' << obs.region_id << ','
          << ssp::method_token(obs.method) << ',' << obs.year << ','
          << obs.proportion_public << ',' << obs.se_proportion << '\n';
    }
  });

  json truth_json;
  truth_json["seed"] = truth.seed;
  truth_json["countries"] = truth.countries;
  truth_json["regions_per_country"] = truth.regions_per_country;
  std::vector<std::string> methods;
  for (auto m : truth.methods) methods.emplace_back(ssp::method_token(m));
  truth_json["methods"] = methods;
  truth_json["window"] = {truth.window.start_year, truth.window.end_year};
  truth_json["sigma_delta"] = sim.truth.global.sigma_delta;
  auto matrix_json = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  truth_json["sigma_theta"] = matrix_json(sim.truth.global.sigma_theta);
  truth_json["sigma_alpha"] = matrix_json(sim.truth.global.sigma_alpha);
  truth_json["theta"] = matrix_json(sim.truth.country.theta);
  truth_json["alpha"] = matrix_json(sim.truth.region.alpha);
  write_text(fs::path(out_dir) / "truth.json",
             [&](std::ostream& out) { out << truth_json.dump(2) << '\n'; });
  return kExitOk;
}

int cmd_report(const std::string& in_dir) {
  const fs::path path = fs::path(in_dir) / "convergence.json";
  if (!fs::exists(path)) {
    throw ssp::MissingArtifactError("no convergence report at " + path.string());
  }
  std::ifstream in(path);
  json rows = json::parse(in);
  std::cout << std::left << std::setw(40) << "parameter" << std::setw(12) << "r_hat"
            << std::setw(12) << "ess" << "acceptance\n";
  long flagged = 0;
  for (const auto& row : rows) {
    const bool is_inf = row.at("r_hat").is_string();
    const double rhat = is_inf ? std::numeric_limits<double>::infinity()
                               : row.at("r_hat").get<double>();
    if (rhat > 1.01) ++flagged;
    std::cout << std::left << std::setw(40)
              << row.at("parameter").get<std::string>() << std::setw(12)
              << (is_inf ? "inf" : std::to_string(rhat).substr(0, 8))
              << std::setw(12)
              << std::to_string(row.at("ess").get<double>()).substr(0, 8)
              << row.at("acceptance_rate").get<double>() << '\n';
  }
  std::cout << "flagged (split-R-hat > 1.01): " << flagged << " of " << rows.size()
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian projection of subnational public/private contraceptive "
               "supply shares"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; flags override it");

  CommonOptions opt;
  bool dump_csv = false;
  bool dump_basis = false;
  int year = 2025;
  int cutoff = 2015;
  std::string in_dir = ".";

  CLI::App* fit = app.add_subcommand("fit", "fit a model and store draws");
  fit->add_option("--data", opt.data_path, "input CSV")->required();
  fit->add_option("--model", opt.model, "model name");
  fit->add_option("--out", opt.out_dir, "output directory");
  fit->add_flag("--dump-csv", dump_csv, "also dump draws as CSV");
  fit->add_flag("--dump-basis", dump_basis, "dump the basis matrices as CSV");
  add_sampler_flags(fit, &opt);
  add_spline_flags(fit, &opt);

  CLI::App* project = app.add_subcommand(
      "project", "trajectories, correlations and year summary from stored draws");
  project->add_option("--in", in_dir, "directory holding draws.bin");
  project->add_option("--out", opt.out_dir, "output directory");
  project->add_option("--year", year, "summary year");

  CLI::App* validate =
      app.add_subcommand("validate", "out-of-sample validation of one model");
  validate->add_option("--data", opt.data_path, "input CSV")->required();
  validate->add_option("--model", opt.model, "model name");
  validate->add_option("--cutoff", cutoff, "test set starts at this year");
  validate->add_option("--out", opt.out_dir, "output directory");
  add_sampler_flags(validate, &opt);
  add_spline_flags(validate, &opt);

  CLI::App* compare =
      app.add_subcommand("compare", "out-of-sample comparison of all model variants");
  compare->add_option("--data", opt.data_path, "input CSV")->required();
  compare->add_option("--cutoff", cutoff, "test set starts at this year");
  compare->add_option("--out", opt.out_dir, "output directory");
  add_sampler_flags(compare, &opt);
  add_spline_flags(compare, &opt);

  ssp::SimulationTruth truth = ssp::desk_scale_scenario();
  CLI::App* simulate =
      app.add_subcommand("simulate", "write a synthetic dataset and its truth");
  simulate->add_option("--out", opt.out_dir, "output directory");
  simulate->add_option("--seed", truth.seed, "scenario seed");
  simulate->add_option("--countries", truth.countries, "number of countries");
  simulate->add_option("--regions-per-country", truth.regions_per_country,
                       "regions per country");

  CLI::App* report = app.add_subcommand("report", "print a stored convergence report");
  report->add_option("--in", in_dir, "directory holding convergence.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (fit->parsed()) return cmd_fit(opt, dump_csv, dump_basis);
    if (project->parsed()) return cmd_project(in_dir, opt.out_dir, year);
    if (validate->parsed()) return cmd_validate(opt, {opt.model}, cutoff);
    if (compare->parsed()) return cmd_validate(opt, ssp::model_names(), cutoff);
    if (simulate->parsed()) return cmd_simulate(opt.out_dir, truth);
    if (report->parsed()) return cmd_report(in_dir);
  } catch (const ssp::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ssp::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingArtifact;
  } catch (const ssp::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ssp::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
