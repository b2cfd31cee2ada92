#pragma once

// Shared builders for model-level tests.

#include <optional>
#include <string>
#include <vector>

#include "survmc/data.hpp"
#include "survmc/model.hpp"
#include "survmc/rng.hpp"

namespace model_helpers {

using namespace survmc;

inline SurvivalRecord rec(double entry, double time, CensoringStatus st,
                          std::vector<double> x = {},
                          std::optional<double> upper = std::nullopt,
                          std::string site = "") {
  SurvivalRecord r;
  r.entry_time = entry;
  r.time = time;
  r.status = st;
  r.upper_time = upper;
  r.covariates = std::move(x);
  if (!site.empty()) r.cluster_labels["site"] = site;
  return r;
}

// Small mixed dataset with one covariate: events, right/left/interval
// censoring, and delayed entry.
inline Dataset mixed_dataset(bool with_sites = false) {
  Dataset ds;
  ds.covariate_names = {"x"};
  auto s = [&](int i) {
    return with_sites ? (i % 2 ? "a" : "b") : std::string{};
  };
  ds.records = {
      rec(0.0, 1.0, CensoringStatus::Event, {0.5}, {}, s(0)),
      rec(0.0, 2.0, CensoringStatus::RightCensored, {-1.0}, {}, s(1)),
      rec(0.5, 1.5, CensoringStatus::Event, {1.0}, {}, s(2)),
      rec(0.0, 0.8, CensoringStatus::LeftCensored, {0.0}, {}, s(3)),
      rec(0.0, 1.0, CensoringStatus::IntervalCensored, {0.3}, 2.5, s(4)),
      rec(0.2, 3.0, CensoringStatus::Event, {-0.5}, {}, s(5)),
      rec(0.0, 2.8, CensoringStatus::Event, {0.9}, {}, s(6)),
      rec(0.0, 3.5, CensoringStatus::RightCensored, {0.1}, {}, s(7)),
  };
  ds.index_factors();
  ds.validate();
  return ds;
}

inline SplineConfig spline_on(double lo, double hi, int degree,
                              std::vector<double> internal) {
  SplineConfig cfg;
  cfg.degree = degree;
  cfg.knots.lower_boundary = lo;
  cfg.knots.internal = std::move(internal);
  cfg.knots.upper_boundary = hi;
  return cfg;
}

inline TveSpec tve_piecewise(std::size_t cov, double knot, double lo, double hi) {
  TveSpec t;
  t.covariate_index = cov;
  t.form = TveForm::PiecewiseConstant;
  t.spline = spline_on(lo, hi, 0, {knot});
  return t;
}

inline TveSpec tve_cubic(std::size_t cov, double lo, double hi,
                         std::vector<double> internal = {}) {
  TveSpec t;
  t.covariate_index = cov;
  t.form = TveForm::BsplineSmooth;
  t.spline = spline_on(lo, hi, 3, std::move(internal));
  return t;
}

inline ModelSpec spec_for(Baseline baseline, const Dataset& ds,
                          bool with_tve = false, bool with_re = false) {
  ModelSpec spec;
  spec.baseline = baseline;
  spec.covariate_names = ds.covariate_names;
  const double hi = ds.t_max();
  if (baseline_has_spline(baseline))
    spec.baseline_spline = spline_on(0.0, hi, 3, {hi / 3, 2 * hi / 3});
  if (with_tve) spec.tve = {tve_piecewise(0, hi / 2, 0.0, hi)};
  if (with_re) spec.re = {ReTerm{"site", std::nullopt}};
  return spec;
}

}  // namespace model_helpers
