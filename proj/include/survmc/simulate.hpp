#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmc/data.hpp"
#include "survmc/quadrature.hpp"
#include "survmc/rng.hpp"

// Event-time simulation by inverting the cumulative hazard at a uniform
// draw: solve S(t) = u, i.e. H(t) = -log u.  Closed-form inversion for the
// standard families with time-fixed effects; bracketed bisection against a
// quadrature-evaluated cumulative hazard when a time-dependent effect is
// present.  Subjects get independent counter-based RNG streams, so a
// simulated dataset is reproducible at any thread count.

namespace survmc {

enum class SimBaseline { Exponential, Weibull, Gompertz };
enum class TdeForm { Linear, Step };

struct SimDesign {
  SimBaseline dist = SimBaseline::Weibull;
  double lambda = 1;  // scale
  double gamma = 1;   // shape
  std::map<std::string, double> betas;
  std::map<std::string, double> tde;  // time-dependent coefficient increments
  TdeForm tde_fn = TdeForm::Linear;
  double tde_threshold = 0;  // Step: I(t > threshold)
  double max_time = 0;       // administrative censoring

  struct Frailty {
    std::string factor = "site";
    double sd = 1;
    std::size_t n_clusters = 0;
    std::size_t n_per_cluster = 0;
  };
  std::optional<Frailty> frailty;

  void validate() const {
    if (!(lambda > 0) || !(gamma > 0) || !(max_time > 0))
      throw std::invalid_argument("simulation design needs lambda, gamma, max_time > 0");
  }
};

struct CovariateTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
};

class RootNotBracketed : public std::runtime_error {
 public:
  RootNotBracketed()
      : std::runtime_error(
            "cumulative hazard never reaches the target before the numeric "
            "horizon") {}
};

namespace sim_detail {

inline double baseline_cumhaz(const SimDesign& d, double t) {
  switch (d.dist) {
    case SimBaseline::Exponential: return d.lambda * t;
    case SimBaseline::Weibull: return d.lambda * std::pow(t, d.gamma);
    case SimBaseline::Gompertz: return d.lambda * std::expm1(d.gamma * t) / d.gamma;
  }
  return 0;
}

inline double invert_baseline_cumhaz(const SimDesign& d, double H) {
  switch (d.dist) {
    case SimBaseline::Exponential: return H / d.lambda;
    case SimBaseline::Weibull: return std::pow(H / d.lambda, 1.0 / d.gamma);
    case SimBaseline::Gompertz: return std::log1p(d.gamma * H / d.lambda) / d.gamma;
  }
  return 0;
}

inline double log_baseline_hazard(const SimDesign& d, double t) {
  switch (d.dist) {
    case SimBaseline::Exponential: return std::log(d.lambda);
    case SimBaseline::Weibull:
      return std::log(d.lambda * d.gamma) + (d.gamma - 1.0) * std::log(t);
    case SimBaseline::Gompertz: return std::log(d.lambda) + d.gamma * t;
  }
  return 0;
}

// time-varying part of the linear predictor: sum_p tde_p x_p f(t)
inline double tde_eta(const SimDesign& d, double tde_x, double t) {
  const double f = d.tde_fn == TdeForm::Linear
                       ? t
                       : (t > d.tde_threshold ? 1.0 : 0.0);
  return tde_x * f;
}

}  // namespace sim_detail

// Simulates one subject; eta0 is the time-fixed linear predictor and tde_x
// the time-dependent coefficient times the covariate value (0 when absent).
inline std::pair<double, CensoringStatus> simulate_event_time(
    const SimDesign& d, double eta0, double tde_x, double u,
    const QuadratureRule& rule) {
  const double target = -std::log(u);  // H(t) must reach this
  if (tde_x == 0.0) {
    const double t = sim_detail::invert_baseline_cumhaz(
        d, target * std::exp(-eta0));
    if (t > d.max_time) return {d.max_time, CensoringStatus::RightCensored};
    return {t, CensoringStatus::Event};
  }

  MeshConfig cfg;
  cfg.refine = 4;
  if (d.dist == SimBaseline::Weibull && d.gamma != 1.0) cfg.grade_panels = 32;
  std::vector<double> breaks;
  if (d.tde_fn == TdeForm::Step) breaks.push_back(d.tde_threshold);
  auto cumhaz = [&](double t) {
    const auto mesh = build_mesh(t, rule, breaks, cfg);
    return mesh.apply([&](double s) {
      return std::exp(sim_detail::log_baseline_hazard(d, s) + eta0 +
                      sim_detail::tde_eta(d, tde_x, s));
    });
  };

  // An event later than max_time is administratively censored, so the root
  // only needs bracketing on [0, max_time].
  if (cumhaz(d.max_time) < target)
    return {d.max_time, CensoringStatus::RightCensored};
  double lo = 0, hi = d.max_time;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (cumhaz(mid) < target ? lo : hi) = mid;
  }
  return {0.5 * (lo + hi), CensoringStatus::Event};
}

inline Dataset simulate(const SimDesign& design, const CovariateTable& covs,
                        std::uint64_t seed) {
  design.validate();
  const auto rule = make_rule(15);
  Dataset ds;
  ds.covariate_names = covs.names;
  std::vector<double> beta(covs.names.size(), 0.0);
  std::vector<double> tde(covs.names.size(), 0.0);
  for (std::size_t p = 0; p < covs.names.size(); ++p) {
    if (auto it = design.betas.find(covs.names[p]); it != design.betas.end())
      beta[p] = it->second;
    if (auto it = design.tde.find(covs.names[p]); it != design.tde.end())
      tde[p] = it->second;
  }
  for (std::size_t i = 0; i < covs.rows.size(); ++i) {
    CounterRng rng(seed, i + 1);
    double eta0 = 0, tde_x = 0;
    for (std::size_t p = 0; p < covs.names.size(); ++p) {
      eta0 += beta[p] * covs.rows[i][p];
      tde_x += tde[p] * covs.rows[i][p];
    }
    auto [t, status] =
        simulate_event_time(design, eta0, tde_x, rng.uniform(), rule);
    SurvivalRecord rec;
    rec.time = std::max(t, 1e-12);
    rec.status = status;
    rec.covariates = covs.rows[i];
    ds.records.push_back(std::move(rec));
  }
  ds.index_factors();
  ds.validate();
  return ds;
}

// Bernoulli(p) covariate table, the common design in the worked examples.
inline CovariateTable bernoulli_covariates(const std::string& name,
                                           std::size_t n, double p,
                                           std::uint64_t seed) {
  CovariateTable t;
  t.names = {name};
  CounterRng rng(seed ^ 0x636f767461626c65ULL, 0);
  for (std::size_t i = 0; i < n; ++i)
    t.rows.push_back({rng.uniform() < p ? 1.0 : 0.0});
  return t;
}

// Clustered simulation: per-cluster intercepts b_j ~ N(0, sd^2) on the log
// hazard scale, cluster label column populated.
inline Dataset simulate_frailty(const SimDesign& design,
                                const CovariateTable& covs,
                                std::uint64_t seed) {
  if (!design.frailty) throw std::invalid_argument("design lacks frailty spec");
  design.validate();
  const auto& fr = *design.frailty;
  const std::size_t n = fr.n_clusters * fr.n_per_cluster;
  if (covs.rows.size() != n)
    throw std::invalid_argument("covariate table size mismatch");
  const auto rule = make_rule(15);

  std::vector<double> b(fr.n_clusters);
  for (std::size_t j = 0; j < fr.n_clusters; ++j) {
    CounterRng rng(seed ^ 0x667261696c747973ULL, j);
    b[j] = fr.sd * rng.normal();
  }

  Dataset ds;
  ds.covariate_names = covs.names;
  std::vector<double> beta(covs.names.size(), 0.0);
  std::vector<double> tde(covs.names.size(), 0.0);
  for (std::size_t p = 0; p < covs.names.size(); ++p) {
    if (auto it = design.betas.find(covs.names[p]); it != design.betas.end())
      beta[p] = it->second;
    if (auto it = design.tde.find(covs.names[p]); it != design.tde.end())
      tde[p] = it->second;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cluster = i / fr.n_per_cluster;
    CounterRng rng(seed, i + 1);
    double eta0 = b[cluster], tde_x = 0;
    for (std::size_t p = 0; p < covs.names.size(); ++p) {
      eta0 += beta[p] * covs.rows[i][p];
      tde_x += tde[p] * covs.rows[i][p];
    }
    auto [t, status] =
        simulate_event_time(design, eta0, tde_x, rng.uniform(), rule);
    SurvivalRecord rec;
    rec.time = std::max(t, 1e-12);
    rec.status = status;
    rec.covariates = covs.rows[i];
    rec.cluster_labels[fr.factor] = std::to_string(cluster + 1);
    ds.records.push_back(std::move(rec));
  }
  ds.index_factors();
  ds.validate();
  return ds;
}

}  // namespace survmc
