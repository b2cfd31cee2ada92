#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/model_helpers.hpp"
#include "survmc/predict.hpp"
#include "survmc/simulate.hpp"

using namespace survmc;
using namespace model_helpers;

namespace {

// Fit of an exponential model to simulated data, shared by the tests.
struct Fixture {
  ModelContext ctx;
  FitResult fit;

  static Dataset data() {
    SimDesign d;
    d.dist = SimBaseline::Exponential;
    d.lambda = 0.6;
    d.betas["x"] = 0.5;
    d.max_time = 5.0;
    auto covs = bernoulli_covariates("x", 300, 0.5, 61);
    return simulate(d, covs, 61);
  }

  Fixture() : ctx(build_context(make_spec(), data())) {
    NutsConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 250;
    cfg.iters = 200;
    cfg.seed = 5;
    fit = fit_model(ctx, cfg);
  }

  static ModelSpec make_spec() {
    ModelSpec spec;
    spec.baseline = Baseline::Exponential;
    spec.covariate_names = {"x"};
    return spec;
  }

  PredictionRequest request(std::vector<double> times,
                            PredQuantity q = PredQuantity::Surv) const {
    PredictionRequest req;
    NewDataRow r0;
    r0.covariates = {0.0};
    NewDataRow r1;
    r1.covariates = {1.0};
    req.rows = {r0, r1};
    req.times = std::move(times);
    req.quantity = q;
    return req;
  }
};

}  // namespace

TEST_CASE("per-draw identities between the prediction quantities") {
  Fixture fx;
  const auto req_s = fx.request({0.0, 0.5, 1.5});
  const auto surv = predict_draw_values(fx.ctx, fx.fit.draws, req_s);
  auto req = req_s;
  req.quantity = PredQuantity::Cumhaz;
  const auto cumhaz = predict_draw_values(fx.ctx, fx.fit.draws, req);
  req.quantity = PredQuantity::Cdf;
  const auto cdf = predict_draw_values(fx.ctx, fx.fit.draws, req);
  req.quantity = PredQuantity::LogSurv;
  const auto logsurv = predict_draw_values(fx.ctx, fx.fit.draws, req);
  for (std::size_t i = 0; i < surv.size(); ++i) {
    REQUIRE(cdf[i] == Catch::Approx(1.0 - surv[i]).margin(1e-12));
    REQUIRE(cumhaz[i] == Catch::Approx(-std::log(surv[i])).margin(1e-9));
    REQUIRE(logsurv[i] == Catch::Approx(std::log(surv[i])).margin(1e-9));
  }
  // boundary: t = 0 has surv 1, cumhaz 0 in every draw
  const std::size_t T = 3;
  for (std::size_t k = 0; k < surv.size(); k += T) {
    REQUIRE(surv[k] == 1.0);
    REQUIRE(cumhaz[k] == 0.0);
  }
  // monotonicity along the grid, per draw and row
  for (std::size_t k = 0; k < surv.size(); k += T) {
    REQUIRE(surv[k] >= surv[k + 1]);
    REQUIRE(surv[k + 1] >= surv[k + 2]);
    REQUIRE(cumhaz[k] <= cumhaz[k + 1]);
    REQUIRE(cumhaz[k + 1] <= cumhaz[k + 2]);
  }
}

TEST_CASE("frame summaries are medians with central intervals") {
  Fixture fx;
  auto frame = predict_curves(fx.ctx, fx.fit.draws, fx.request({1.0}));
  REQUIRE(frame.rows.size() == 2);
  for (const auto& r : frame.rows) {
    REQUIRE(r.ci_lb <= r.median);
    REQUIRE(r.median <= r.ci_ub);
    REQUIRE(r.median > 0);
    REQUIRE(r.median < 1);
  }
  // row with x=1 has worse survival (positive coefficient)
  REQUIRE(frame.rows[1].median < frame.rows[0].median);
}

TEST_CASE("extrapolation beyond the estimation horizon is refused") {
  Fixture fx;
  REQUIRE_THROWS_AS(
      predict_curves(fx.ctx, fx.fit.draws, fx.request({fx.ctx.t_max * 1.2})),
      ExtrapolationBeyondTmax);
}

TEST_CASE("conditional survival is the per-draw ratio") {
  Fixture fx;
  auto req = fx.request({2.0});
  req.condition_time = 1.0;
  auto cond = conditional_survival(fx.ctx, fx.fit.draws, req);

  auto raw = predict_draw_values(fx.ctx, fx.fit.draws,
                                 fx.request({1.0, 2.0}, PredQuantity::Surv));
  // reconstruct the conditional ratio by hand for row 0
  const std::size_t S = fx.fit.draws.n_draws();
  std::vector<double> ratio(S);
  for (std::size_t s = 0; s < S; ++s)
    ratio[s] = raw[(s * 2 + 0) * 2 + 1] / raw[(s * 2 + 0) * 2 + 0];
  REQUIRE(cond.rows[0].median == Catch::Approx(quantile_of(ratio, 0.5)));
  REQUIRE(cond.conditional);

  // conditioning then multiplying back recovers the unconditional curve
  for (std::size_t s = 0; s < S; ++s)
    ratio[s] *= raw[(s * 2 + 0) * 2 + 0];
  std::vector<double> uncond(S);
  for (std::size_t s = 0; s < S; ++s) uncond[s] = raw[(s * 2 + 0) * 2 + 1];
  for (std::size_t s = 0; s < S; ++s)
    REQUIRE(ratio[s] == Catch::Approx(uncond[s]).margin(1e-12));

  auto bad = fx.request({0.5});
  bad.condition_time = 1.0;
  REQUIRE_THROWS_AS(conditional_survival(fx.ctx, fx.fit.draws, bad),
                    ConditionAfterPredictionTime);
}

TEST_CASE("standardised survival averages rows per draw") {
  Fixture fx;
  auto req = fx.request({1.0, 2.0});
  auto vals = predict_draw_values(fx.ctx, fx.fit.draws, req);
  auto frame = standardised_survival(fx.ctx, fx.fit.draws, req);
  const std::size_t S = fx.fit.draws.n_draws();
  std::vector<double> avg1(S);
  for (std::size_t s = 0; s < S; ++s)
    avg1[s] = 0.5 * (vals[(s * 2 + 0) * 2 + 0] + vals[(s * 2 + 1) * 2 + 0]);
  REQUIRE(frame.rows[0].median == Catch::Approx(quantile_of(avg1, 0.5)));
  REQUIRE(frame.standardised);

  // a single row standardises to itself
  PredictionRequest one = req;
  one.rows = {req.rows[0]};
  auto f_one = standardised_survival(fx.ctx, fx.fit.draws, one);
  auto f_plain = predict_curves(fx.ctx, fx.fit.draws, one);
  for (std::size_t i = 0; i < f_one.rows.size(); ++i)
    REQUIRE(f_one.rows[i].median == Catch::Approx(f_plain.rows[i].median));
}

TEST_CASE("hazard quantities use the right-limit at time zero") {
  Fixture fx;
  auto req = fx.request({0.0, 1.0}, PredQuantity::Haz);
  auto frame = predict_curves(fx.ctx, fx.fit.draws, req);
  // exponential hazard is constant: value at 0 equals value at 1
  REQUIRE(frame.rows[0].median == Catch::Approx(frame.rows[1].median));
  REQUIRE(frame.rows[0].median > 0);
}

TEST_CASE("ps_check against the Kaplan-Meier overlay") {
  Fixture fx;
  auto res = ps_check(fx.ctx, fx.fit.draws, 20);
  REQUIRE(res.times.size() == 20);
  // model is well specified: discrepancy stays small
  REQUIRE(res.max_abs_discrepancy < 0.05);
  // early grid points sit near 1 for both curves
  REQUIRE(res.km[0] > 0.8);
  REQUIRE(res.pred_median[0] > 0.8);
}

TEST_CASE("degenerate cluster variance makes new-cluster prediction exact") {
  // craft a single synthetic draw with sd = 0 (so bnew = 0) and compare the
  // unseen-cluster prediction with a no-effect in-sample prediction
  auto ds = mixed_dataset(true);
  auto spec = spec_for(Baseline::Exponential, ds, false, true);
  auto ctx = build_context(spec, ds);
  auto [names, rl] = report_names(ctx);
  FitDraws draws;
  draws.names = names;
  draws.cols = rl;
  draws.n_cols = rl.n_cols;
  draws.n_chains = 1;
  draws.chain_id = {0};
  draws.draws.assign(rl.n_cols, 0.0);
  draws.draws[rl.intercept] = -0.5;
  draws.draws[rl.beta] = 0.3;
  // sd, all b, and bnew stay exactly zero

  PredictionRequest req;
  NewDataRow unseen;
  unseen.covariates = {1.0};
  unseen.cluster_labels["site"] = "never-seen";
  NewDataRow known;
  known.covariates = {1.0};
  known.cluster_labels["site"] = "a";
  req.rows = {unseen, known};
  req.times = {1.0, 2.0};
  auto frame = predict_curves(ctx, draws, req);
  REQUIRE(frame.rows[0].median == frame.rows[2].median);  // same times order
  REQUIRE(frame.rows[1].median == frame.rows[3].median);
  REQUIRE(frame.rows[0].median ==
          Catch::Approx(std::exp(-std::exp(-0.5 + 0.3) * 1.0)));
}

TEST_CASE("unseen cluster labels marginalise over the stored draws") {
  auto ds = mixed_dataset(true);
  auto spec = spec_for(Baseline::Exponential, ds, false, true);
  auto ctx = build_context(spec, ds);
  NutsConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 200;
  cfg.iters = 150;
  cfg.seed = 31;
  auto fit = fit_model(ctx, cfg);

  PredictionRequest req;
  NewDataRow in_sample;
  in_sample.covariates = {0.5};
  in_sample.cluster_labels["site"] = "a";
  NewDataRow unseen;
  unseen.covariates = {0.5};
  unseen.cluster_labels["site"] = "brand-new";
  req.rows = {in_sample, unseen};
  req.times = {1.0};
  auto frame = predict_curves(ctx, fit.draws, req);
  REQUIRE(frame.rows.size() == 2);
  // the marginal (new-cluster) interval is at least as wide as the
  // conditional in-sample one
  const double w_in = frame.rows[0].ci_ub - frame.rows[0].ci_lb;
  const double w_new = frame.rows[1].ci_ub - frame.rows[1].ci_lb;
  REQUIRE(w_new > 0.5 * w_in);
}
