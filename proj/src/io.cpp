#include "ssp/io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace ssp {

using nlohmann::json;

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    writer(out);
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FitArtifact make_artifact(DrawStore draws, const ModelData& data) {
  FitArtifact artifact;
  artifact.draws = std::move(draws);
  artifact.window = data.window;
  artifact.spline = data.spline;
  artifact.region_ids = data.region_ids;
  artifact.country_ids = data.country_ids;
  artifact.region_country = data.region_country;
  artifact.methods = data.methods;
  for (int p = 0; p < data.n_regions(); ++p) {
    artifact.region_anchor_year.push_back(static_cast<int>(
        data.knots[p].interior_knots[data.knots[p].k_star_index]));
  }
  return artifact;
}

ModelData model_data_from_artifact(const FitArtifact& artifact) {
  ModelData md;
  md.window = artifact.window;
  md.spline = artifact.spline;
  md.region_ids = artifact.region_ids;
  md.country_ids = artifact.country_ids;
  md.region_country = artifact.region_country;
  md.methods = artifact.methods;
  for (int y = md.window.start_year; y <= md.window.end_year; ++y) {
    md.grid_years.push_back(y);
  }
  const int P = md.n_regions();
  md.knots.resize(P);
  md.basis.resize(P);
  md.anchor.resize(P);
  md.diff_transform.resize(P);
  md.cells.assign(P, std::vector<CellObservations>(md.n_methods()));
  std::vector<double> grid(md.grid_years.begin(), md.grid_years.end());
  for (int p = 0; p < P; ++p) {
    md.knots[p] = place_knots(md.window, artifact.region_anchor_year[p],
                              md.spline.knot_spacing, md.spline.degree);
    md.basis[p] = build_basis(md.knots[p], grid);
    md.anchor[p] = anchor_coefficient(md.knots[p]);
    md.diff_transform[p] =
        anchored_difference_transform(md.knots[p].basis_count(), md.anchor[p]);
  }
  return md;
}

namespace {

constexpr char kMagic[9] = "SSPFIT1\n";

json config_to_json(const SamplerConfig& c) {
  return json{{"iterations", c.iterations}, {"burn_in", c.burn_in},
              {"thin", c.thin},             {"chains", c.chains},
              {"seed", c.seed},             {"slice_width", c.slice_width},
              {"parallel_chains", c.parallel_chains}};
}

SamplerConfig config_from_json(const json& j) {
  SamplerConfig c;
  c.iterations = j.at("iterations").get<long>();
  c.burn_in = j.at("burn_in").get<long>();
  c.thin = j.at("thin").get<long>();
  c.chains = j.at("chains").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.slice_width = j.at("slice_width").get<double>();
  c.parallel_chains = j.at("parallel_chains").get<bool>();
  return c;
}

}  // namespace

void save_fit(const std::filesystem::path& path, const FitArtifact& artifact) {
  const DrawStore& d = artifact.draws;
  json meta;
  meta["model"] = d.model_name;
  meta["config"] = config_to_json(d.config);
  meta["chain_seeds"] = d.chain_seeds;
  meta["acceptance_rates"] = d.acceptance_rates;
  meta["window"] = {artifact.window.start_year, artifact.window.end_year};
  meta["spline"] = {{"degree", artifact.spline.degree},
                    {"knot_spacing", artifact.spline.knot_spacing}};
  meta["region_ids"] = artifact.region_ids;
  meta["country_ids"] = artifact.country_ids;
  meta["region_country"] = artifact.region_country;
  meta["region_anchor_year"] = artifact.region_anchor_year;
  std::vector<std::string> method_tokens;
  for (Method m : artifact.methods) method_tokens.emplace_back(method_token(m));
  meta["methods"] = method_tokens;
  meta["kept"] = d.kept();
  meta["chains"] = d.n_chains();
  meta["dim"] = d.registry.dim();

  const std::string meta_str = meta.dump();
  atomic_write(path, [&](std::ostream& out) {
    out.write(kMagic, 8);
    const std::uint64_t len = meta_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(meta_str.data(), static_cast<std::streamsize>(len));
    for (const auto& chain : d.chains) {
      // Row-major dump, one kept draw per row.
      for (long i = 0; i < chain.rows(); ++i) {
        for (int j = 0; j < chain.cols(); ++j) {
          const double v = chain(i, j);
          out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
      }
    }
  });
}

FitArtifact load_fit(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing draws file: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw Error("not a fit artifact: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string meta_str(len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated fit artifact: " + path.string());
  const json meta = json::parse(meta_str);

  FitArtifact artifact;
  artifact.window = {meta.at("window")[0].get<int>(), meta.at("window")[1].get<int>()};
  artifact.spline.degree = meta.at("spline").at("degree").get<int>();
  artifact.spline.knot_spacing = meta.at("spline").at("knot_spacing").get<double>();
  artifact.region_ids = meta.at("region_ids").get<std::vector<std::string>>();
  artifact.country_ids = meta.at("country_ids").get<std::vector<std::string>>();
  artifact.region_country = meta.at("region_country").get<std::vector<int>>();
  artifact.region_anchor_year = meta.at("region_anchor_year").get<std::vector<int>>();
  for (const auto& tok : meta.at("methods")) {
    const auto m = method_from_token(tok.get<std::string>());
    if (!m) throw Error("unknown method token in artifact");
    artifact.methods.push_back(*m);
  }

  DrawStore& d = artifact.draws;
  d.model_name = meta.at("model").get<std::string>();
  const ModelSpec spec = model_by_name(d.model_name);
  d.family = spec.family;
  d.k_star_mode = spec.k_star_mode;
  d.methods = artifact.methods;
  d.config = config_from_json(meta.at("config"));
  d.chain_seeds = meta.at("chain_seeds").get<std::vector<std::uint64_t>>();
  d.acceptance_rates =
      meta.at("acceptance_rates").get<std::map<std::string, double>>();

  const ModelData md = model_data_from_artifact(artifact);
  d.registry = ParamRegistry::build(spec, md);
  const long kept = meta.at("kept").get<long>();
  const int n_chains = meta.at("chains").get<int>();
  const int dim = meta.at("dim").get<int>();
  if (dim != d.registry.dim()) {
    throw Error("fit artifact layout does not match the model (dim " +
                std::to_string(dim) + " vs " + std::to_string(d.registry.dim()) +
                ")");
  }
  d.chains.assign(n_chains, Eigen::MatrixXd(kept, dim));
  for (auto& chain : d.chains) {
    for (long i = 0; i < kept; ++i) {
      for (int j = 0; j < dim; ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        chain(i, j) = v;
      }
    }
  }
  if (!in) throw Error("truncated draw payload: " + path.string());
  return artifact;
}

void write_draws_csv(std::ostream& out, const DrawStore& draws) {
  out << "chain,draw,parameter,value\n";
  out.precision(17);
  for (int c = 0; c < draws.n_chains(); ++c) {
    for (long i = 0; i < draws.kept(); ++i) {
      for (int j = 0; j < draws.registry.dim(); ++j) {
        out << c + 1 << ',' << i + 1 << ',' << draws.registry.names()[j] << ','
            << draws.chains[c](i, j) << '\n';
      }
    }
  }
}

void write_convergence_json(std::ostream& out,
                            const std::vector<ConvergenceRow>& rows) {
  json arr = json::array();
  for (const auto& row : rows) {
    arr.push_back({{"parameter", row.parameter},
                   {"r_hat", std::isinf(row.r_hat) ? json("inf") : json(row.r_hat)},
                   {"ess", row.ess},
                   {"acceptance_rate", row.acceptance_rate},
                   {"constant", row.constant}});
  }
  out << arr.dump(2) << '\n';
}

}  // namespace ssp
