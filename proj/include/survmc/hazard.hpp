#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "survmc/ad.hpp"
#include "survmc/quadrature.hpp"
#include "survmc/splines.hpp"

// Hazard-scale baselines: exponential, Weibull, Gompertz, M-spline (hazard
// scale, simplex coefficients) and B-spline (log-hazard scale).  Closed
// forms follow the usual parameterisation h_i(t) = h_0(t) exp(eta_i); the
// B-spline cumulative hazard has no analytic form and is reachable only
// through quadrature.

namespace survmc {

enum class Baseline {
  Exponential,
  Weibull,
  Gompertz,
  MSpline,
  BSpline,
  ExponentialAft,
  WeibullAft,
};

inline bool baseline_is_aft(Baseline b) {
  return b == Baseline::ExponentialAft || b == Baseline::WeibullAft;
}
inline bool baseline_has_spline(Baseline b) {
  return b == Baseline::MSpline || b == Baseline::BSpline;
}
inline const char* baseline_name(Baseline b) {
  switch (b) {
    case Baseline::Exponential: return "exp";
    case Baseline::Weibull: return "weibull";
    case Baseline::Gompertz: return "gompertz";
    case Baseline::MSpline: return "ms";
    case Baseline::BSpline: return "bs";
    case Baseline::ExponentialAft: return "exp-aft";
    case Baseline::WeibullAft: return "weibull-aft";
  }
  return "?";
}

class AnalyticFormUnavailable : public std::runtime_error {
 public:
  AnalyticFormUnavailable()
      : std::runtime_error(
            "B-spline cumulative quantities have no analytic form; use the "
            "quadrature path") {}
};

class NonPositiveMass : public std::runtime_error {
 public:
  NonPositiveMass()
      : std::runtime_error("interval probability underflowed to zero") {}
};

// --- scalar-generic per-family primitives -------------------------------
//
// The shape/scale parameter and any spline-coefficient dot products are
// passed in as the scalar type S so the same code serves plain evaluation
// and reverse-mode differentiation.

template <class S>
S exponential_log_hazard(const S& eta) { return eta; }
template <class S>
S exponential_log_cumhaz(double t, const S& eta) { return std::log(t) + eta; }

template <class S>
S weibull_log_hazard(const S& gamma, double t, const S& eta) {
  return sm_log(gamma) + (gamma - 1.0) * std::log(t) + eta;
}
template <class S>
S weibull_log_cumhaz(const S& gamma, double t, const S& eta) {
  return gamma * std::log(t) + eta;
}

template <class S>
S gompertz_log_hazard(const S& gamma, double t, const S& eta) {
  return gamma * t + eta;
}
template <class S>
S gompertz_log_cumhaz(const S& gamma, double t, const S& eta) {
  return log_expm1(gamma * t) - sm_log(gamma) + eta;
}

// mdot = sum_l gamma_l M_l(t), idot = sum_l gamma_l I_l(t)
template <class S>
S mspline_log_hazard(const S& mdot, const S& eta) { return sm_log(mdot) + eta; }
template <class S>
S mspline_log_cumhaz(const S& idot, const S& eta) { return sm_log(idot) + eta; }

// bdot = sum_l gamma_l B_l(t) over the no-intercept basis
template <class S>
S bspline_log_hazard(const S& bdot, const S& eta) { return bdot + eta; }

template <class S>
S log_survival_from_log_cumhaz(const S& log_cumhaz) {
  return -sm_exp(log_cumhaz);
}

// log(S(t_lower) - S(t_upper)) from the two log survival values.
template <class S>
S log_interval_mass(const S& log_surv_lower, const S& log_surv_upper) {
  return log_surv_lower + log1m_exp(log_surv_upper - log_surv_lower);
}

// --- public double-precision family API ---------------------------------

struct HazardFamily {
  Baseline kind = Baseline::Exponential;
  // Weibull/Gompertz: {gamma}.  MSpline: simplex coefficients (length L).
  // BSpline: unconstrained coefficients over the no-intercept basis
  // (length L - 1, the leading basis column being dropped in favour of the
  // intercept in the linear predictor).
  std::vector<double> aux;
  std::shared_ptr<const SplineBasis> spline;

  static HazardFamily exponential() { return {Baseline::Exponential, {}, nullptr}; }
  static HazardFamily weibull(double gamma) {
    if (!(gamma > 0)) throw std::domain_error("Weibull shape must be > 0");
    return {Baseline::Weibull, {gamma}, nullptr};
  }
  static HazardFamily gompertz(double gamma) {
    if (!(gamma > 0)) throw std::domain_error("Gompertz scale must be > 0");
    return {Baseline::Gompertz, {gamma}, nullptr};
  }
  static HazardFamily mspline(std::vector<double> coefs, SplineConfig cfg) {
    cfg.basis_kind = BasisKind::MSpline;
    auto basis = std::make_shared<SplineBasis>(cfg);
    if (coefs.size() != basis->size())
      throw std::invalid_argument("M-spline coefficient count mismatch");
    double sum = 0;
    for (double c : coefs) {
      if (c < 0) throw std::domain_error("M-spline coefficients must be >= 0");
      sum += c;
    }
    if (std::fabs(sum - 1.0) > 1e-8)
      throw std::domain_error("M-spline coefficients must sum to 1");
    return {Baseline::MSpline, std::move(coefs), std::move(basis)};
  }
  static HazardFamily bspline(std::vector<double> coefs, SplineConfig cfg) {
    cfg.basis_kind = BasisKind::BSpline;
    auto basis = std::make_shared<SplineBasis>(cfg);
    if (coefs.size() + 1 != basis->size())
      throw std::invalid_argument(
          "B-spline baseline expects L-1 coefficients (no-intercept basis)");
    return {Baseline::BSpline, std::move(coefs), std::move(basis)};
  }
};

namespace detail {
inline double dot_skip_first(std::span<const double> coefs,
                             std::span<const double> basis) {
  double acc = 0;
  for (std::size_t l = 0; l < coefs.size(); ++l) acc += coefs[l] * basis[l + 1];
  return acc;
}
}  // namespace detail

inline double log_hazard(const HazardFamily& fam, double t, double eta) {
  switch (fam.kind) {
    case Baseline::Exponential:
      return exponential_log_hazard(eta);
    case Baseline::Weibull:
      if (!(t > 0)) throw std::domain_error("Weibull hazard requires t > 0");
      return weibull_log_hazard(fam.aux[0], t, eta);
    case Baseline::Gompertz:
      return gompertz_log_hazard(fam.aux[0], t, eta);
    case Baseline::MSpline: {
      const auto m = fam.spline->mspline(t);
      double mdot = 0;
      for (std::size_t l = 0; l < m.size(); ++l) mdot += fam.aux[l] * m[l];
      return mspline_log_hazard(mdot, eta);
    }
    case Baseline::BSpline: {
      const auto b = fam.spline->bspline(t);
      return bspline_log_hazard(detail::dot_skip_first(fam.aux, b), eta);
    }
    default:
      throw std::invalid_argument("AFT family passed to hazard-scale API");
  }
}

inline double log_cumulative_hazard(const HazardFamily& fam, double t,
                                    double eta) {
  if (!(t > 0)) throw std::domain_error("cumulative hazard requires t > 0");
  switch (fam.kind) {
    case Baseline::Exponential:
      return exponential_log_cumhaz(t, eta);
    case Baseline::Weibull:
      return weibull_log_cumhaz(fam.aux[0], t, eta);
    case Baseline::Gompertz:
      return gompertz_log_cumhaz(fam.aux[0], t, eta);
    case Baseline::MSpline: {
      const auto is = fam.spline->ispline(t);
      double idot = 0;
      for (std::size_t l = 0; l < is.size(); ++l) idot += fam.aux[l] * is[l];
      return mspline_log_cumhaz(idot, eta);
    }
    case Baseline::BSpline:
      throw AnalyticFormUnavailable();
    default:
      throw std::invalid_argument("AFT family passed to hazard-scale API");
  }
}

inline double log_survival(const HazardFamily& fam, double t, double eta) {
  if (t == 0) return 0.0;
  return log_survival_from_log_cumhaz(log_cumulative_hazard(fam, t, eta));
}

inline double log_interval_probability(const HazardFamily& fam, double t_lower,
                                       double t_upper, double eta) {
  if (!(0 < t_lower && t_lower <= t_upper))
    throw std::domain_error("interval bounds must satisfy 0 < lower < upper");
  // Bounds may coincide after floating-point collapse; the mass then
  // underflows to zero and is reported as such.
  const double v =
      log_interval_mass(log_survival(fam, t_lower, eta),
                        log_survival(fam, t_upper, eta));
  if (!std::isfinite(v)) throw NonPositiveMass();
  return v;
}

// Cumulative hazard by composite Gauss-Kronrod quadrature of exp(log_hazard).
// The mesh splits at spline knots; `cfg.grade_panels` controls grading toward
// zero for integrands with a power singularity there (Weibull, shape < 1).
inline double cumulative_hazard_quadrature(const HazardFamily& fam, double t,
                                           double eta,
                                           const QuadratureRule& rule,
                                           const MeshConfig& cfg = {}) {
  std::vector<double> breaks;
  if (fam.spline) {
    breaks = fam.spline->config().knots.all();
  }
  MeshConfig use = cfg;
  if (fam.kind != Baseline::Weibull) use.grade_panels = std::min(use.grade_panels, 0);
  const auto mesh = build_mesh(t, rule, breaks, use);
  return mesh.apply([&](double u) { return std::exp(log_hazard(fam, u, eta)); });
}

}  // namespace survmc
