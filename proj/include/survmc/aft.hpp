#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "survmc/ad.hpp"
#include "survmc/hazard.hpp"
#include "survmc/quadrature.hpp"

// Accelerated failure time baselines (exponential and Weibull).  Covariates
// rescale time inside the baseline survival: S_i(t) = S_0(t exp(-eta)) when
// the linear predictor is time-fixed, and S_i(t) = S_0(a_i(t)) with the
// cumulative acceleration factor a_i(t) = int_0^t exp(-eta_i(u)) du when it
// is not.  The hazard under time-varying acceleration follows Hougaard:
// h_i(t) = exp(-eta_i(t)) h_0(a_i(t)).

namespace survmc {

class UnsupportedFamily : public std::invalid_argument {
 public:
  explicit UnsupportedFamily(const std::string& what)
      : std::invalid_argument(what) {}
};

struct AftFamily {
  bool weibull = false;
  double shape = 1.0;  // gamma, Weibull only

  static AftFamily exponential() { return {false, 1.0}; }
  static AftFamily weibull_aft(double gamma) {
    if (!(gamma > 0)) throw std::domain_error("Weibull shape must be > 0");
    return {true, gamma};
  }
};

// --- scalar-generic primitives (a = cumulative acceleration factor) ------

template <class S>
S aft_exponential_log_survival_from_accel(const S& a) { return -a; }

template <class S>
S aft_weibull_log_survival_from_accel(const S& a, const S& gamma) {
  return -sm_exp(gamma * sm_log(a));
}

template <class S>
S aft_exponential_log_hazard_from_accel(const S& eta_at_t) { return -eta_at_t; }

template <class S>
S aft_weibull_log_hazard_from_accel(const S& eta_at_t, const S& a,
                                    const S& gamma) {
  return -eta_at_t + sm_log(gamma) + (gamma - 1.0) * sm_log(a);
}

// --- public double-precision API -----------------------------------------

inline double aft_log_survival(const AftFamily& fam, double t, double eta) {
  if (t < 0) throw std::domain_error("survival time must be >= 0");
  if (t == 0) return 0.0;
  if (!fam.weibull) return -t * std::exp(-eta);
  return -std::pow(t, fam.shape) * std::exp(-fam.shape * eta);
}

inline double aft_log_hazard(const AftFamily& fam, double t, double eta) {
  if (!fam.weibull) return -eta;
  if (!(t > 0)) throw std::domain_error("Weibull AFT hazard requires t > 0");
  return std::log(fam.shape) + (fam.shape - 1.0) * std::log(t) -
         fam.shape * eta;
}

// int_0^t exp(-eta(u)) du by a single application of the rule; exact for
// constant eta.
template <class EtaFn>
double cumulative_acceleration(EtaFn&& eta_fn, double t,
                               const QuadratureRule& rule) {
  return integrate(rule, [&](double u) { return std::exp(-eta_fn(u)); }, t);
}

inline double aft_tve_log_survival(const AftFamily& fam, double cum_accel) {
  if (!(cum_accel > 0)) {
    if (cum_accel == 0) return 0.0;  // S(0) = 1
    throw std::domain_error("cumulative acceleration must be >= 0");
  }
  if (!fam.weibull) return -cum_accel;
  return -std::pow(cum_accel, fam.shape);
}

inline double aft_tve_log_hazard(const AftFamily& fam, double eta_at_t,
                                 double cum_accel) {
  if (!fam.weibull) return -eta_at_t;
  if (!(cum_accel > 0))
    throw std::domain_error("cumulative acceleration must be > 0");
  return -eta_at_t + std::log(fam.shape) +
         (fam.shape - 1.0) * std::log(cum_accel);
}

// Maps proportional-hazards coefficients to their AFT counterparts
// (exponential: beta* = -beta; Weibull: beta* = -beta / gamma).  Only valid
// in the absence of time-varying effects.
inline std::vector<double> ph_to_aft_coefficients(Baseline family,
                                                  std::vector<double> beta_ph,
                                                  double gamma = 1.0) {
  double scale;
  switch (family) {
    case Baseline::Exponential: scale = -1.0; break;
    case Baseline::Weibull:
      if (!(gamma > 0)) throw std::domain_error("Weibull shape must be > 0");
      scale = -1.0 / gamma;
      break;
    default:
      throw UnsupportedFamily(
          "PH<->AFT mapping exists only for exponential and Weibull");
  }
  for (double& b : beta_ph) b *= scale;
  return beta_ph;
}

// Inverse map: exponential beta = -beta*; Weibull beta = -gamma beta*.
inline std::vector<double> aft_to_ph_coefficients(Baseline family,
                                                  std::vector<double> beta_aft,
                                                  double gamma = 1.0) {
  double scale;
  switch (family) {
    case Baseline::Exponential: scale = -1.0; break;
    case Baseline::Weibull:
      if (!(gamma > 0)) throw std::domain_error("Weibull shape must be > 0");
      scale = -gamma;
      break;
    default:
      throw UnsupportedFamily(
          "PH<->AFT mapping exists only for exponential and Weibull");
  }
  for (double& b : beta_aft) b *= scale;
  return beta_aft;
}

}  // namespace survmc
