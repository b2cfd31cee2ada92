#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

// L-BFGS maximisation of a log density on the unconstrained scale, used for
// MAP estimates and as a deterministic cross-check on the sampler.

namespace survmc {

class MaxIterations : public std::runtime_error {
 public:
  MaxIterations() : std::runtime_error("optimizer hit the iteration limit") {}
};
class LineSearchFailure : public std::runtime_error {
 public:
  LineSearchFailure() : std::runtime_error("line search failed to make progress") {}
};

struct OptimResult {
  std::vector<double> x;
  double logp = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
};

template <class Target>
OptimResult lbfgs_maximize(const Target& target, std::vector<double> x,
                           int max_iters = 1000, double grad_tol = 1e-6,
                           int history = 8) {
  const std::size_t n = target.dim();
  if (x.size() != n) throw std::invalid_argument("bad initial point");
  std::vector<double> g(n), x_new(n), g_new(n);
  double f = target.logp_grad(x, g);
  if (!std::isfinite(f)) throw std::invalid_argument("non-finite start point");

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  auto norm2 = [&](std::span<const double> v) {
    double acc = 0;
    for (double vi : v) acc += vi * vi;
    return std::sqrt(acc);
  };

  OptimResult res;
  for (int it = 0; it < max_iters; ++it) {
    res.grad_norm = norm2(g);
    if (res.grad_norm < grad_tol) {
      res.x = x;
      res.logp = f;
      res.iterations = it;
      res.converged = true;
      return res;
    }

    // two-loop recursion on the ascent direction
    std::vector<double> q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      double sq = 0;
      for (std::size_t i = 0; i < n; ++i) sq += s_hist[k][i] * q[i];
      alpha[k] = rho_hist[k] * sq;
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * y_hist[k][i];
    }
    double scale = 1.0;
    if (!s_hist.empty()) {
      double sy = 0, yy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sy += s_hist.back()[i] * y_hist.back()[i];
        yy += y_hist.back()[i] * y_hist.back()[i];
      }
      if (yy > 0) scale = sy / yy;
    }
    for (double& qi : q) qi *= scale;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      double yq = 0;
      for (std::size_t i = 0; i < n; ++i) yq += y_hist[k][i] * q[i];
      const double beta = rho_hist[k] * yq;
      for (std::size_t i = 0; i < n; ++i) q[i] += s_hist[k][i] * (alpha[k] - beta);
    }

    double dir_deriv = 0;
    for (std::size_t i = 0; i < n; ++i) dir_deriv += q[i] * g[i];
    if (!(dir_deriv > 0)) {  // not an ascent direction: restart from gradient
      q = g;
      dir_deriv = res.grad_norm * res.grad_norm;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // backtracking Armijo line search
    double step = 1.0;
    double f_new = -std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * q[i];
      f_new = target.logp_grad(x_new, g_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * dir_deriv) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      if (res.grad_norm < 1e-4) {  // flat enough to call converged-ish
        res.x = x;
        res.logp = f;
        res.iterations = it;
        res.converged = false;
        return res;
      }
      throw LineSearchFailure();
    }

    std::vector<double> s(n), yv(n);
    double sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      yv[i] = g[i] - g_new[i];  // note: ascent convention
      sy += s[i] * yv[i];
    }
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
  }
  throw MaxIterations();
}

}  // namespace survmc
