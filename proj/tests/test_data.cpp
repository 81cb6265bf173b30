#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "ssp/data.hpp"
#include "ssp/rng.hpp"
#include "ssp/stats.hpp"
#include "stat_tests.hpp"

using namespace ssp;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

Observation make_obs(const std::string& country, const std::string& region,
                     Method method, int year, double p, double se) {
  return Observation{country, region, method, year, p, se};
}

/// Monte Carlo oracle for the delta-method SE: robust spread (1.4826 x MAD)
/// of logit-transformed draws from Normal(p, se^2).
double mc_logit_scale_sd(double p, double se, long n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> z(n);
  for (long i = 0; i < n; ++i) {
    double x = rng.normal(p, se);
    x = std::clamp(x, 1e-12, 1.0 - 1e-12);
    z[i] = std::log(x / (1.0 - x));
  }
  const double med = median(z);
  std::vector<double> dev(n);
  for (long i = 0; i < n; ++i) dev[i] = std::abs(z[i] - med);
  return 1.4826 * median(std::move(dev));
}

}  // namespace

TEST_CASE("logit transform matches the closed form") {
  const auto mid = to_logit(make_obs("a", "r", Method::pill, 2000, 0.5, 0.1));
  CHECK(mid.logit_value == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(mid.logit_se == doctest::Approx(0.4).epsilon(1e-14));

  const auto high = to_logit(make_obs("a", "r", Method::pill, 2000, 0.9, 0.03));
  CHECK(high.logit_value == doctest::Approx(2.1972245773362196).epsilon(1e-12));
  CHECK(high.logit_se == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("delta-method SE agrees with the Monte Carlo oracle at 1e6 draws") {
  const double sd_mid = mc_logit_scale_sd(0.5, 0.1, 1000000, 71);
  CHECK(std::abs(sd_mid - 0.4) / 0.4 < 0.01);

  const double sd_high = mc_logit_scale_sd(0.9, 0.03, 1000000, 72);
  const double expected = 0.03 / (0.9 * 0.1);
  CHECK(std::abs(sd_high - expected) / expected < 0.01);
}

TEST_CASE("delta-method consistency holds across the feasible band") {
  // Property: 2% relative agreement whenever the central mass stays inside
  // (0,1); the SE cap keeps p +/- 3.5 se away from the boundary.
  Rng rng(2024);
  for (int trial = 0; trial < 8; ++trial) {
    const double p = rng.uniform(0.05, 0.95);
    const double cap = std::min(0.1, std::min(p, 1.0 - p) / 3.5);
    const double se = rng.uniform(0.2 * cap, cap);
    const double expected = se / (p * (1.0 - p));
    const double got = mc_logit_scale_sd(p, se, 200000, 100 + trial);
    INFO("p=", p, " se=", se);
    CHECK(std::abs(got - expected) / expected < 0.02);
  }
}

TEST_CASE("zero-error limit passes through untouched") {
  const auto tiny = to_logit(make_obs("a", "r", Method::pill, 2000, 0.5, 1e-9));
  CHECK(tiny.logit_se == doctest::Approx(4e-9).epsilon(1e-12));
}

TEST_CASE("logit round trip is exact to 1e-12") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(0.001, 0.999);
    const auto lo = to_logit(make_obs("a", "r", Method::iud, 2000, p, 0.05));
    CHECK(inverse_logit(lo.logit_value) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("to_logit rejects boundary proportions and bad SEs") {
  CHECK_THROWS_AS(to_logit(make_obs("a", "r", Method::pill, 2000, 0.0, 0.1)),
                  ValidationError);
  CHECK_THROWS_AS(to_logit(make_obs("a", "r", Method::pill, 2000, 1.0, 0.1)),
                  ValidationError);
  CHECK_THROWS_AS(to_logit(make_obs("a", "r", Method::pill, 2000, 0.5, 0.0)),
                  ValidationError);
}

TEST_CASE("parsing a 29-region single-survey country") {
  TempDir dir("parse29");
  std::ostringstream csv;
  csv << "country_id,region_id,method,year,prop_public,se_prop\n";
  for (int r = 1; r <= 29; ++r) {
    csv << "afg,afg_r" << r << ",injectable,2015,0.7,0.05\n";
  }
  write_file(dir.file("d.csv"), csv.str());
  const Dataset ds = parse_dataset(dir.file("d.csv"));
  CHECK(ds.region_index().size() == 29);
  CHECK(ds.size() == 29);
  for (const auto& [region, year] : ds.last_survey_year()) {
    CHECK(year == 2015);
  }
  CHECK(ds.methods() == std::vector<Method>{Method::injectable});
}

TEST_CASE("last survey year is the max across methods within a region") {
  std::vector<Observation> obs = {
      make_obs("a", "r1", Method::pill, 2005, 0.4, 0.05),
      make_obs("a", "r1", Method::iud, 2011, 0.5, 0.05),
      make_obs("a", "r1", Method::pill, 2008, 0.45, 0.05),
  };
  const Dataset ds = Dataset::from_observations(obs, {1990, 2030});
  CHECK(ds.last_survey_year().at("r1") == 2011);
}

TEST_CASE("parser error paths") {
  TempDir dir("parse_err");

  SUBCASE("missing column names the column") {
    write_file(dir.file("d.csv"), "country_id,region_id,method,year,prop_public\n"
                                  "a,r,pill,2000,0.5\n");
    CHECK_THROWS_WITH_AS(parse_dataset(dir.file("d.csv")),
                         doctest::Contains("se_prop"), SchemaError);
  }
  SUBCASE("proportion outside [0,1] carries the row index") {
    write_file(dir.file("d.csv"),
               "country_id,region_id,method,year,prop_public,se_prop\n"
               "a,r,pill,2000,1.4,0.05\n");
    CHECK_THROWS_WITH_AS(parse_dataset(dir.file("d.csv")), doctest::Contains("row 2"),
                         ValidationError);
  }
  SUBCASE("unknown method token lists the vocabulary") {
    write_file(dir.file("d.csv"),
               "country_id,region_id,method,year,prop_public,se_prop\n"
               "a,r,condom,2000,0.5,0.05\n");
    CHECK_THROWS_WITH_AS(
        parse_dataset(dir.file("d.csv")),
        doctest::Contains("sterilization, pill, implant, iud, injectable"),
        ValidationError);
  }
  SUBCASE("duplicate key is rejected") {
    write_file(dir.file("d.csv"),
               "country_id,region_id,method,year,prop_public,se_prop\n"
               "a,r,pill,2000,0.5,0.05\n"
               "a,r,pill,2000,0.6,0.05\n");
    CHECK_THROWS_WITH_AS(parse_dataset(dir.file("d.csv")),
                         doctest::Contains("duplicate"), ValidationError);
  }
  SUBCASE("empty observation list") {
    write_file(dir.file("d.csv"),
               "country_id,region_id,method,year,prop_public,se_prop\n");
    CHECK_THROWS_WITH_AS(parse_dataset(dir.file("d.csv")),
                         doctest::Contains("empty dataset"), ValidationError);
  }
  SUBCASE("non-positive SE is a row error") {
    write_file(dir.file("d.csv"),
               "country_id,region_id,method,year,prop_public,se_prop\n"
               "a,r,pill,2000,0.5,0\n");
    CHECK_THROWS_AS(parse_dataset(dir.file("d.csv")), ValidationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(parse_dataset(dir.file("nope.csv")), MissingArtifactError);
  }
}

TEST_CASE("boundary proportions clamp with a warning") {
  TempDir dir("clamp");
  write_file(dir.file("d.csv"), "country_id,region_id,method,year,prop_public,se_prop\n"
                                "a,r1,pill,2000,1.0,0.05\n"
                                "a,r2,pill,2000,0.002,0.05\n"
                                "a,r3,pill,2000,0.5,0.05\n");
  const Dataset ds = parse_dataset(dir.file("d.csv"));
  CHECK(ds.warnings().size() == 2);
  std::set<double> props;
  for (const auto& o : ds.observations()) props.insert(o.proportion_public);
  CHECK(props == std::set<double>{0.005, 0.5, 0.995});
}

TEST_CASE("a region cannot belong to two countries") {
  std::vector<Observation> obs = {
      make_obs("a", "r1", Method::pill, 2000, 0.4, 0.05),
      make_obs("b", "r1", Method::pill, 2005, 0.4, 0.05),
  };
  CHECK_THROWS_WITH_AS(Dataset::from_observations(obs, {1990, 2030}),
                       doctest::Contains("two countries"), ValidationError);
}

TEST_CASE("train/test split semantics") {
  std::vector<Observation> obs = {
      make_obs("a", "r1", Method::pill, 2010, 0.4, 0.05),
      make_obs("a", "r1", Method::pill, 2014, 0.5, 0.05),
      make_obs("a", "r1", Method::pill, 2016, 0.6, 0.05),
  };
  const Dataset ds = Dataset::from_observations(obs, {1990, 2030});

  SUBCASE("cutoff year goes to the test side") {
    auto [train, test] = split_train_test(ds, 2015);
    CHECK(train.size() == 2);
    CHECK(test.size() == 1);
    CHECK(test.observations().front().year == 2016);
    CHECK(train.last_survey_year().at("r1") == 2014);
  }
  SUBCASE("the split partitions the dataset") {
    auto [train, test] = split_train_test(ds, 2015);
    std::multiset<int> years;
    for (const auto& o : train.observations()) years.insert(o.year);
    for (const auto& o : test.observations()) years.insert(o.year);
    CHECK(years == std::multiset<int>{2010, 2014, 2016});
  }
  SUBCASE("one-sided split leaves an empty test set without error") {
    auto [train, test] = split_train_test(ds, 2020);
    CHECK(train.size() == 3);
    CHECK(test.empty());
  }
  SUBCASE("empty training side is an error") {
    CHECK_THROWS_WITH_AS(split_train_test(ds, 2005),
                         doctest::Contains("empty training set"), ValidationError);
  }
  SUBCASE("cutoff outside the window is a config error") {
    CHECK_THROWS_AS(split_train_test(ds, 1970), ConfigError);
  }
}

TEST_CASE("custom schema column mapping") {
  TempDir dir("schema");
  write_file(dir.file("d.csv"), "iso,adm1,meth,yr,share,err\n"
                                "a,r1,pill,2001,0.42,0.04\n");
  SchemaConfig schema;
  schema.country_col = "iso";
  schema.region_col = "adm1";
  schema.method_col = "meth";
  schema.year_col = "yr";
  schema.proportion_col = "share";
  schema.se_col = "err";
  const Dataset ds = parse_dataset(dir.file("d.csv"), schema);
  CHECK(ds.size() == 1);
  CHECK(ds.observations().front().proportion_public == doctest::Approx(0.42));
}
