#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "survmc/ad.hpp"

// Bijections between unconstrained sampling coordinates and constrained
// parameter blocks, with log-Jacobian accumulation: log transform for
// positive scalars, stick-breaking for simplexes, and the tanh/partial-
// correlation map for Cholesky factors of correlation matrices.

namespace survmc {

template <class S>
S s_const(double v) {
  return S(v);
}

template <class S>
S positive_constrain(const S& y, S& log_jac) {
  log_jac += y;
  return sm_exp(y);
}

inline double positive_unconstrain(double x) {
  if (!(x > 0)) throw std::domain_error("positive_unconstrain: x must be > 0");
  return std::log(x);
}

template <class S>
S inv_logit(const S& y) {
  return 1.0 / (1.0 + sm_exp(-y));
}

// Stick-breaking simplex: K-1 unconstrained values -> K probabilities.
// y = 0 maps to the uniform simplex.
template <class S>
std::vector<S> simplex_constrain(std::span<const S> y, S& log_jac) {
  const std::size_t K = y.size() + 1;
  std::vector<S> x;
  x.reserve(K);
  const S z0 = inv_logit(y[0] - std::log(static_cast<double>(K - 1)));
  x.push_back(z0);
  log_jac += sm_log(z0) + sm_log1p(-z0);
  S stick = 1.0 - z0;
  for (std::size_t k = 1; k + 1 < K; ++k) {
    const S z = inv_logit(y[k] - std::log(static_cast<double>(K - k - 1)));
    x.push_back(stick * z);
    log_jac += sm_log(stick) + sm_log(z) + sm_log1p(-z);
    stick = stick - x.back();
  }
  x.push_back(stick);
  return x;
}

inline std::vector<double> simplex_unconstrain(std::span<const double> x) {
  const std::size_t K = x.size();
  if (K < 2) throw std::invalid_argument("simplex needs at least 2 entries");
  std::vector<double> y(K - 1);
  double stick = 1.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double z = x[k] / stick;
    y[k] = std::log(z / (1.0 - z)) + std::log(static_cast<double>(K - k - 1));
    stick -= x[k];
  }
  return y;
}

// Lower-triangular Cholesky factor of a correlation matrix from D(D-1)/2
// unconstrained values (canonical partial correlations via tanh).  Output is
// row-major D x D.  The Jacobian covers y -> L only; the L -> correlation
// volume element is added separately where a correlation-scale prior is used.
template <class S>
std::vector<S> cholesky_corr_constrain(std::span<const S> y, std::size_t D,
                                       S& log_jac) {
  std::vector<S> z;
  z.reserve(y.size());
  for (const S& yi : y) {
    S zi = sm_tanh(yi);
    log_jac += sm_log1p(-(zi * zi));
    z.push_back(zi);
  }
  std::vector<S> L(D * D, s_const<S>(0.0));
  L[0] = s_const<S>(1.0);
  std::size_t idx = 0;
  for (std::size_t i = 1; i < D; ++i) {
    L[i * D + 0] = z[idx++];
    S sum_sqs = L[i * D] * L[i * D];
    for (std::size_t j = 1; j < i; ++j) {
      log_jac += 0.5 * sm_log1p(-sum_sqs);
      L[i * D + j] = z[idx++] * sm_sqrt(1.0 - sum_sqs);
      sum_sqs = sum_sqs + L[i * D + j] * L[i * D + j];
    }
    L[i * D + i] = sm_sqrt(1.0 - sum_sqs);
  }
  return L;
}

inline std::vector<double> cholesky_corr_unconstrain(
    std::span<const double> L, std::size_t D) {
  std::vector<double> y;
  for (std::size_t i = 1; i < D; ++i) {
    double sum_sqs = 0;
    for (std::size_t j = 0; j < i; ++j) {
      const double denom = std::sqrt(1.0 - sum_sqs);
      const double z = L[i * D + j] / denom;
      y.push_back(std::atanh(z));
      sum_sqs += L[i * D + j] * L[i * D + j];
    }
  }
  return y;
}

// log |d corr / d L| for the map from the Cholesky factor to the correlation
// matrix: sum over rows i (0-indexed) of (D - 1 - i) log L_ii.
template <class S>
void chol_to_corr_log_jacobian(std::span<const S> L, std::size_t D,
                               S& log_jac) {
  for (std::size_t i = 1; i + 1 < D; ++i)
    log_jac += static_cast<double>(D - 1 - i) * sm_log(L[i * D + i]);
}

}  // namespace survmc
