#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmc/ad.hpp"

// Prior log densities: scalar families for coefficients and auxiliary
// parameters, the random-walk smoothing prior for time-varying-effect
// coefficients, and the decomposition prior (LKJ x Dirichlet x Gamma) for
// random-effect covariance matrices.  Densities include their normalising
// constants.

namespace survmc {

enum class PriorFamily {
  Normal,
  StudentT,
  Cauchy,
  Exponential,
  HalfNormal,
  HalfT,
  HalfCauchy,
  Flat,
};

inline bool prior_positive_only(PriorFamily f) {
  return f == PriorFamily::Exponential || f == PriorFamily::HalfNormal ||
         f == PriorFamily::HalfT || f == PriorFamily::HalfCauchy;
}

struct ScalarPrior {
  PriorFamily family = PriorFamily::Normal;
  double location = 0;
  double scale = 1;  // rate for the exponential family
  std::optional<double> df;

  static ScalarPrior normal(double loc, double scale) {
    return {PriorFamily::Normal, loc, scale, {}};
  }
  static ScalarPrior student_t(double df, double loc, double scale) {
    return {PriorFamily::StudentT, loc, scale, df};
  }
  static ScalarPrior cauchy(double loc, double scale) {
    return {PriorFamily::Cauchy, loc, scale, {}};
  }
  static ScalarPrior exponential(double rate) {
    return {PriorFamily::Exponential, 0, rate, {}};
  }
  static ScalarPrior half_normal(double scale) {
    return {PriorFamily::HalfNormal, 0, scale, {}};
  }
  static ScalarPrior half_t(double df, double scale) {
    return {PriorFamily::HalfT, 0, scale, df};
  }
  static ScalarPrior half_cauchy(double scale) {
    return {PriorFamily::HalfCauchy, 0, scale, {}};
  }
  static ScalarPrior flat() { return {PriorFamily::Flat, 0, 1, {}}; }

  void validate() const {
    if (!(scale > 0)) throw std::invalid_argument("prior scale must be > 0");
    if ((family == PriorFamily::StudentT || family == PriorFamily::HalfT) &&
        (!df || !(*df > 0)))
      throw std::invalid_argument("t priors require df > 0");
  }
};

class PriorOutOfSupport : public std::domain_error {
 public:
  explicit PriorOutOfSupport(const std::string& what)
      : std::domain_error(what) {}
};

namespace detail {
inline constexpr double log_pi = 1.1447298858494001741434273513531;

template <class S>
S student_t_lpdf(const S& x, double nu, double mu, double sigma) {
  const S z = (x - mu) / sigma;
  const double c = std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu) -
                   0.5 * std::log(nu) - 0.5 * log_pi - std::log(sigma);
  return c - 0.5 * (nu + 1) * sm_log1p((z * z) / nu);
}

template <class S>
S cauchy_lpdf(const S& x, double mu, double sigma) {
  const S z = (x - mu) / sigma;
  return -log_pi - std::log(sigma) - sm_log1p(z * z);
}
}  // namespace detail

// Log density assuming `value` is inside the support; the unconstrained
// parameterisation guarantees this inside the posterior.
template <class S>
S log_prior_density(const ScalarPrior& prior, const S& value) {
  constexpr double log2 = 0.6931471805599453094172321214582;
  switch (prior.family) {
    case PriorFamily::Normal:
      return normal_lpdf(value, prior.location, prior.scale);
    case PriorFamily::StudentT:
      return detail::student_t_lpdf(value, *prior.df, prior.location,
                                    prior.scale);
    case PriorFamily::Cauchy:
      return detail::cauchy_lpdf(value, prior.location, prior.scale);
    case PriorFamily::Exponential:
      return std::log(prior.scale) - prior.scale * value;
    case PriorFamily::HalfNormal:
      return log2 + normal_lpdf(value, 0.0, prior.scale);
    case PriorFamily::HalfT:
      return log2 + detail::student_t_lpdf(value, *prior.df, 0.0, prior.scale);
    case PriorFamily::HalfCauchy:
      return log2 + detail::cauchy_lpdf(value, 0.0, prior.scale);
    case PriorFamily::Flat:
      return s_const_like(value, 0.0);
  }
  throw std::logic_error("unknown prior family");
}

// Support-checked evaluation.
inline double log_prior_scalar(const ScalarPrior& prior, double value) {
  prior.validate();
  if (prior_positive_only(prior.family) && value < 0)
    throw PriorOutOfSupport("value outside positive support");
  return log_prior_density(prior, value);
}

// Random-walk smoothing prior for TVE coefficients:
//   theta_1 ~ N(0,1),  theta_m ~ N(theta_{m-1}, tau)  for m = 2..M.
template <class S, class T>
auto log_prior_random_walk(std::span<const S> theta, const T& tau) {
  auto acc = normal_lpdf(theta[0], 0.0, 1.0);
  for (std::size_t m = 1; m < theta.size(); ++m)
    acc += normal_lpdf(theta[m], theta[m - 1], tau);
  return acc;
}

// Symmetric Dirichlet with common concentration; general concentrations via
// the vector overload.
template <class S>
S dirichlet_lpdf(std::span<const S> x, std::span<const double> conc) {
  double alpha0 = 0, lg = 0;
  for (double a : conc) {
    alpha0 += a;
    lg += std::lgamma(a);
  }
  S acc = s_const_like(x[0], std::lgamma(alpha0) - lg);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (conc[i] != 1.0) acc += (conc[i] - 1.0) * sm_log(x[i]);
  return acc;
}

template <class S>
S gamma_lpdf(const S& x, double shape, double scale) {
  S acc = s_const_like(x, -std::lgamma(shape) - shape * std::log(scale));
  if (shape != 1.0) acc += (shape - 1.0) * sm_log(x);
  return acc - x / scale;
}

struct CovariancePriorSpec {
  double lkj_regularisation = 1.0;  // zeta
  double simplex_concentration = 1.0;  // phi
  double gamma_shape = 1.0;
  double gamma_scale = 1.0;

  void validate() const {
    if (!(lkj_regularisation > 0 && simplex_concentration > 0 &&
          gamma_shape > 0 && gamma_scale > 0))
      throw std::invalid_argument("covariance prior parameters must be > 0");
  }
};

class InvalidSimplex : public std::domain_error {
 public:
  InvalidSimplex() : std::domain_error("simplex entries must be >=0, sum 1") {}
};
class InvalidCholesky : public std::domain_error {
 public:
  InvalidCholesky()
      : std::domain_error("not a Cholesky factor of a correlation matrix") {}
};

namespace detail {
// LKJ normalising constant on the correlation scale.  Exact for orders 1
// and 2 (the orders reachable from the model grammar); higher orders drop
// the constant, which cancels in posterior computations.
inline double lkj_log_norm_const(std::size_t D, double zeta) {
  if (D <= 1) return 0.0;
  if (D == 2) {
    const double lbeta = std::lgamma(zeta) * 2 - std::lgamma(2 * zeta);
    return -((2 * zeta - 1) * std::log(2.0) + lbeta);
  }
  return 0.0;
}
}  // namespace detail

// LKJ density of the correlation matrix (through its Cholesky factor):
// log c(zeta) + (zeta - 1) log det(corr).
template <class S>
S lkj_corr_lpdf(std::span<const S> L, std::size_t D, double zeta) {
  S acc = s_const_like(L[0], detail::lkj_log_norm_const(D, zeta));
  if (zeta != 1.0)
    for (std::size_t i = 1; i < D; ++i)
      acc += (zeta - 1.0) * 2.0 * sm_log(L[i * D + i]);
  return acc;
}

// Joint prior for the covariance decomposition: LKJ on the correlation,
// symmetric Dirichlet on the variance simplex, Gamma on the scale.  The
// reconstruction is Sigma = diag(sigma) corr diag(sigma) with
// sigma_d^2 = pi_d * D * tau^2.
inline double log_prior_covariance(std::span<const double> corr_chol,
                                   std::span<const double> simplex, double tau,
                                   const CovariancePriorSpec& spec,
                                   std::size_t order) {
  spec.validate();
  if (simplex.size() != order) throw InvalidSimplex();
  double sum = 0;
  for (double p : simplex) {
    if (p < 0) throw InvalidSimplex();
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-8) throw InvalidSimplex();
  if (corr_chol.size() != order * order) throw InvalidCholesky();
  for (std::size_t i = 0; i < order; ++i) {
    double row = 0;
    for (std::size_t j = 0; j <= i; ++j) row += corr_chol[i * order + j] * corr_chol[i * order + j];
    if (std::fabs(row - 1.0) > 1e-8 || corr_chol[i * order + i] <= 0)
      throw InvalidCholesky();
    for (std::size_t j = i + 1; j < order; ++j)
      if (corr_chol[i * order + j] != 0.0) throw InvalidCholesky();
  }
  if (!(tau > 0)) throw std::domain_error("scale must be > 0");

  std::vector<double> conc(order, spec.simplex_concentration);
  return lkj_corr_lpdf(corr_chol, order, spec.lkj_regularisation) +
         dirichlet_lpdf(simplex, conc) +
         gamma_lpdf(tau, spec.gamma_shape, spec.gamma_scale);
}

}  // namespace survmc
