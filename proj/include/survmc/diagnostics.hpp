#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

// MCMC convergence diagnostics: split-chain Rhat and rank-normalised bulk
// effective sample size (Geyer initial monotone sequence estimator).

namespace survmc {

class InsufficientDraws : public std::invalid_argument {
 public:
  InsufficientDraws()
      : std::invalid_argument(
            "diagnostics need at least 2 chains with 4 draws each") {}
};

namespace diag_detail {

// Standard normal quantile via bisection on erfc; plenty fast for ranks.
inline double inverse_normal_cdf(double p) {
  if (!(p > 0 && p < 1)) throw std::domain_error("p must be in (0,1)");
  double lo = -10, hi = 10;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Average ranks with ties, mapped through the normal quantile function.
inline std::vector<double> rank_normalize(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  std::vector<double> z(n);
  for (std::size_t k = 0; k < n; ++k)
    z[k] = inverse_normal_cdf((rank[k] - 0.375) / (n + 0.25));
  return z;
}

inline std::vector<std::vector<double>> split_chains(
    const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.begin() + half, c.begin() + 2 * half);
  }
  return out;
}

struct Moments {
  double w = 0;         // mean within-chain variance
  double var_plus = 0;  // pooled variance estimate
  double rhat = 0;
};

inline Moments chain_moments(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains[0].size();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    double mu = 0;
    for (double v : chains[c]) mu += v;
    mu /= static_cast<double>(n);
    double s2 = 0;
    for (double v : chains[c]) s2 += (v - mu) * (v - mu);
    means[c] = mu;
    vars[c] = s2 / static_cast<double>(n - 1);
  }
  double grand = 0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(m);
  double b = 0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(n) / static_cast<double>(m - 1);
  Moments mo;
  mo.w = 0;
  for (double v : vars) mo.w += v;
  mo.w /= static_cast<double>(m);
  mo.var_plus = (static_cast<double>(n - 1) / n) * mo.w + b / n;
  mo.rhat = mo.w > 0 ? std::sqrt(mo.var_plus / mo.w)
                     : std::numeric_limits<double>::infinity();
  return mo;
}

inline double autocovariance(const std::vector<double>& x, std::size_t lag,
                             double mean) {
  double acc = 0;
  for (std::size_t i = 0; i + lag < x.size(); ++i)
    acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(x.size());
}

}  // namespace diag_detail

struct RhatEss {
  double rhat = 0;
  double ess = 0;
};

// draws: one vector per chain, equal lengths.  Rhat is the split-chain
// potential scale reduction on the raw values; ESS is computed on
// rank-normalised values (robust to heavy tails).
inline RhatEss rhat_ess(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InsufficientDraws();
  for (const auto& c : chains)
    if (c.size() < 4) throw InsufficientDraws();

  RhatEss out;
  out.rhat = diag_detail::chain_moments(diag_detail::split_chains(chains)).rhat;

  // rank-normalise pooled draws, then split each chain in half
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  std::vector<double> pooled;
  pooled.reserve(total);
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  const auto z = diag_detail::rank_normalize(pooled);
  std::vector<std::vector<double>> zchains;
  std::size_t off = 0;
  for (const auto& c : chains) {
    zchains.emplace_back(z.begin() + off, z.begin() + off + c.size());
    off += c.size();
  }
  const auto split = diag_detail::split_chains(zchains);
  const auto mo = diag_detail::chain_moments(split);

  // Geyer initial monotone positive sequence on split chains.
  const std::size_t m = split.size();
  const std::size_t n = split[0].size();
  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) {
    double mu = 0;
    for (double v : split[c]) mu += v;
    means[c] = mu / static_cast<double>(n);
  }
  const std::size_t max_lag = n - 1;
  auto rho_at = [&](std::size_t t) {
    double acov = 0;
    for (std::size_t c = 0; c < m; ++c)
      acov += diag_detail::autocovariance(split[c], t, means[c]);
    acov /= static_cast<double>(m);
    return 1.0 - (mo.w - acov) / mo.var_plus;
  };
  // pairwise sums, stop at first negative pair, enforce monotone decline
  const double rho0 = rho_at(0);
  double tau = -rho0;  // cancels the lag-0 term counted below
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < max_lag; t += 2) {
    double pair = (t == 0 ? rho0 : rho_at(t)) + rho_at(t + 1);
    if (pair < 0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n) + 10.0));
  out.ess = static_cast<double>(m * n) / tau;
  return out;
}

// Convenience overload for a flat (draws x 1) layout grouped by chain id.
inline RhatEss rhat_ess(std::span<const double> values,
                        std::span<const int> chain_id, int n_chains) {
  std::vector<std::vector<double>> chains(n_chains);
  for (std::size_t i = 0; i < values.size(); ++i)
    chains[chain_id[i]].push_back(values[i]);
  return rhat_ess(chains);
}

}  // namespace survmc
