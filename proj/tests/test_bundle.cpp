#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "support/model_helpers.hpp"
#include "survmc/bundle.hpp"
#include "survmc/predict.hpp"

using namespace survmc;
using namespace model_helpers;

namespace {
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("survmc_bundle_test_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};
}  // namespace

TEST_CASE("spec JSON round trip") {
  auto ds = mixed_dataset(true);
  for (Baseline fam :
       {Baseline::Exponential, Baseline::MSpline, Baseline::WeibullAft}) {
    auto spec = spec_for(fam, ds, fam != Baseline::Exponential, true);
    spec.priors.coef = ScalarPrior::student_t(4, 0, 1.5);
    spec.qnodes = 11;
    auto j = spec_to_json(spec, "surv(time, status) ~ x");
    auto back = spec_from_json(j);
    REQUIRE(back.baseline == spec.baseline);
    REQUIRE(back.covariate_names == spec.covariate_names);
    REQUIRE(back.qnodes == 11);
    REQUIRE(back.tve.size() == spec.tve.size());
    REQUIRE(back.re.size() == spec.re.size());
    REQUIRE(back.priors.coef.family == PriorFamily::StudentT);
    REQUIRE(back.priors.coef.df == 4.0);
    if (spec.baseline_spline) {
      REQUIRE(back.baseline_spline->degree == spec.baseline_spline->degree);
      REQUIRE(back.baseline_spline->knots.internal ==
              spec.baseline_spline->knots.internal);
    }
  }
  nlohmann::json bad;
  bad["version"] = 99;
  REQUIRE_THROWS_AS(spec_from_json(bad), BundleVersionMismatch);
}

TEST_CASE("bundle round trip preserves draws bit-exactly and predictions") {
  TempDir tmp;
  auto ds = mixed_dataset(true);
  auto spec = spec_for(Baseline::Weibull, ds, false, true);
  auto ctx = build_context(spec, ds);
  NutsConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 150;
  cfg.iters = 100;
  cfg.seed = 77;
  auto fit = fit_model(ctx, cfg);
  const auto dir = (tmp.path / "fit").string();
  write_bundle(dir, ctx, fit, "surv(time, status) ~ x + (1 | site)");

  auto bundle = read_bundle(dir);
  REQUIRE(bundle.spec.baseline == Baseline::Weibull);
  REQUIRE(bundle.draws.n_draws() == fit.draws.n_draws());
  REQUIRE(bundle.draws.names == fit.draws.names);
  for (std::size_t i = 0; i < fit.draws.draws.size(); ++i)
    REQUIRE(bundle.draws.draws[i] == fit.draws.draws[i]);

  // reconstructed context produces identical predictions
  auto ctx2 = context_from_bundle(bundle);
  attach_report_layout(ctx2, bundle.draws);
  PredictionRequest req;
  NewDataRow row;
  row.covariates = {0.4};
  row.cluster_labels["site"] = "a";
  req.rows = {row};
  req.times = {0.5, 1.5, 3.0};
  auto f1 = predict_curves(ctx, fit.draws, req);
  auto f2 = predict_curves(ctx2, bundle.draws, req);
  REQUIRE(f1.rows.size() == f2.rows.size());
  for (std::size_t i = 0; i < f1.rows.size(); ++i) {
    REQUIRE(f1.rows[i].median == f2.rows[i].median);
    REQUIRE(f1.rows[i].ci_lb == f2.rows[i].ci_lb);
    REQUIRE(f1.rows[i].ci_ub == f2.rows[i].ci_ub);
  }

  // diagnostics carry divergence counts and per-parameter Rhat
  REQUIRE(bundle.diagnostics.contains("divergent_fraction"));
  REQUIRE(bundle.diagnostics.contains("parameters"));
}

TEST_CASE("bundle writes are atomic") {
  TempDir tmp;
  auto ds = mixed_dataset();
  auto spec = spec_for(Baseline::Exponential, ds);
  auto ctx = build_context(spec, ds);
  NutsConfig cfg;
  cfg.chains = 1;
  cfg.warmup = 50;
  cfg.iters = 50;
  auto fit = fit_model(ctx, cfg);
  const auto dir = (tmp.path / "atomic").string();
  write_bundle(dir, ctx, fit, "surv(time, status) ~ x");
  REQUIRE(std::filesystem::exists(dir + "/spec.json"));
  REQUIRE(!std::filesystem::exists(dir + ".tmp"));
  // overwriting is clean
  write_bundle(dir, ctx, fit, "surv(time, status) ~ x");
  REQUIRE(std::filesystem::exists(dir + "/draws.csv"));
}
