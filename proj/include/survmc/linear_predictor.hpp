#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmc/splines.hpp"

// Natural-scale linear predictor: intercept, time-fixed coefficients,
// time-varying coefficient functions built from B-spline deviation bases,
// and cluster-specific random effects:
//   eta_ij(t) = beta_0 + sum_p beta_p(t) x_p + sum_factors b_j' z_ij
// with beta_p(t) = theta_p0 + sum_l theta_pl B_l(t) for covariates carrying
// a time-varying effect.  The deviation basis drops the leading B-spline
// column; for degree 0 with knots {k} this yields exactly the interval
// indicators I(k_{l+1} < t <= k_{l+2}), so theta_pl is the deviation of the
// (l+1)-th interval from the first.

namespace survmc {

enum class TveForm { BsplineSmooth, PiecewiseConstant };

struct TveSpec {
  std::size_t covariate_index = 0;
  TveForm form = TveForm::BsplineSmooth;
  SplineConfig spline;  // full-basis config; degree 0 for piecewise

  // number of deviation coefficients theta_{p,1..M}
  std::size_t n_deviation() const { return spline.n_basis() - 1; }

  void validate() const {
    if ((form == TveForm::PiecewiseConstant) != (spline.degree == 0))
      throw std::invalid_argument(
          "piecewise-constant TVE requires degree 0 and vice versa");
    if (n_deviation() == 0)
      throw std::invalid_argument(
          "time-varying effect needs at least one deviation term (add an "
          "internal knot or raise the degree)");
  }
};

struct CoefficientBlock {
  double intercept = 0;             // beta_0
  std::vector<double> beta_fixed;   // theta_p0 for every covariate p
  std::vector<std::vector<double>> theta_tve;  // per TveSpec, deviations
  // per clustering factor: row-major (levels x dim) matrix of effects
  std::vector<std::vector<double>> random_effects;
  std::vector<std::size_t> random_effect_dim;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what)
      : std::invalid_argument(what) {}
};

// beta_p(t) for a covariate with a time-varying effect.
inline double time_varying_coefficient(const CoefficientBlock& coefs,
                                       const std::vector<TveSpec>& specs,
                                       std::size_t term, double t) {
  const TveSpec& spec = specs.at(term);
  const auto basis = bspline_eval(t, spec.spline);
  const auto& theta = coefs.theta_tve.at(term);
  if (theta.size() + 1 != basis.size())
    throw DimensionMismatch("TVE coefficient count mismatch");
  double b = coefs.beta_fixed.at(spec.covariate_index);
  for (std::size_t l = 0; l < theta.size(); ++l) b += theta[l] * basis[l + 1];
  return b;
}

// eta at time t.  `z` holds one design vector per clustering factor and
// `cluster_ids` the level index of this observation in each factor.
inline double eta_at(const CoefficientBlock& coefs,
                     std::span<const double> x,
                     const std::vector<TveSpec>& tve_specs,
                     std::span<const std::vector<double>> z,
                     std::span<const std::size_t> cluster_ids, double t) {
  if (x.size() != coefs.beta_fixed.size())
    throw DimensionMismatch("covariate dimension mismatch");
  double eta = coefs.intercept;
  for (std::size_t p = 0; p < x.size(); ++p) eta += coefs.beta_fixed[p] * x[p];
  for (std::size_t k = 0; k < tve_specs.size(); ++k) {
    const std::size_t p = tve_specs[k].covariate_index;
    const double dev =
        time_varying_coefficient(coefs, tve_specs, k, t) - coefs.beta_fixed[p];
    eta += dev * x[p];
  }
  if (z.size() != coefs.random_effects.size() ||
      cluster_ids.size() != coefs.random_effects.size())
    throw DimensionMismatch("random-effect structure mismatch");
  for (std::size_t f = 0; f < z.size(); ++f) {
    const std::size_t dim = coefs.random_effect_dim[f];
    if (z[f].size() != dim)
      throw DimensionMismatch("random-effect design vector length mismatch");
    const auto& b = coefs.random_effects[f];
    const std::size_t j = cluster_ids[f];
    if ((j + 1) * dim > b.size())
      throw DimensionMismatch("cluster index out of range");
    for (std::size_t d = 0; d < dim; ++d) eta += b[j * dim + d] * z[f][d];
  }
  return eta;
}

}  // namespace survmc
