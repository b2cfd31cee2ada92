#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmc/fit.hpp"
#include "survmc/model.hpp"

// Pointwise log-likelihood matrix, WAIC, raw importance-sampling LOO, and
// model comparison tables.

namespace survmc {

// Likelihood view over one stored draw row.  The row layout keeps beta, the
// TVE blocks, aux, and each factor's b block contiguous, so the view borrows
// spans directly; only the intercept needs back-conversion to the internal
// centered scale.
inline LikView<double> lik_view_from_row(const ModelContext& ctx,
                                         const ReportLayout& rl,
                                         std::span<const double> row) {
  LikView<double> v;
  const std::size_t P = ctx.spec.covariate_names.size();
  double b0 = row[rl.intercept];
  for (std::size_t i = 0; i < P; ++i) b0 += row[rl.beta + i] * ctx.x_mean[i];
  v.intercept_c = b0;
  v.beta = row.subspan(rl.beta, P);
  for (std::size_t k = 0; k < ctx.spec.tve.size(); ++k)
    v.tve.push_back(row.subspan(rl.tve[k], ctx.spec.tve[k].n_deviation()));
  v.aux = row.subspan(rl.aux, rl.aux_n);
  for (std::size_t f = 0; f < ctx.spec.re.size(); ++f) {
    const std::size_t dim = ctx.layout.re[f].dim;
    const std::size_t levels = ctx.re_levels[f];
    v.b.push_back(row.subspan(rl.re[f].b, levels * dim));
  }
  return v;
}

enum class LogLikUnit { PerRow, PerGroup };

struct PointwiseLogLik {
  std::size_t n_draws = 0;
  std::size_t n_units = 0;
  LogLikUnit unit = LogLikUnit::PerRow;
  std::vector<double> m;  // row-major, n_draws x n_units

  double at(std::size_t s, std::size_t u) const { return m[s * n_units + u]; }
};

// Pointwise log likelihood; one column per data row, or per group when
// `group_ids` is given (log likelihoods summed within an id).
inline PointwiseLogLik log_lik_matrix(
    const ModelContext& ctx, const FitDraws& draws,
    const std::vector<std::string>& group_ids = {}) {
  const std::size_t n_rows = ctx.work.size();
  std::vector<std::size_t> unit_of(n_rows);
  std::size_t n_units = n_rows;
  if (!group_ids.empty()) {
    if (group_ids.size() != n_rows)
      throw std::invalid_argument("group id count must match the data rows");
    std::vector<std::string> seen;
    for (std::size_t i = 0; i < n_rows; ++i) {
      auto it = std::find(seen.begin(), seen.end(), group_ids[i]);
      if (it == seen.end()) {
        unit_of[i] = seen.size();
        seen.push_back(group_ids[i]);
      } else {
        unit_of[i] = static_cast<std::size_t>(it - seen.begin());
      }
    }
    n_units = seen.size();
  } else {
    std::iota(unit_of.begin(), unit_of.end(), 0);
  }

  PointwiseLogLik out;
  out.n_draws = draws.n_draws();
  out.n_units = n_units;
  out.unit = group_ids.empty() ? LogLikUnit::PerRow : LogLikUnit::PerGroup;
  out.m.assign(out.n_draws * n_units, 0.0);
  for (std::size_t s = 0; s < out.n_draws; ++s) {
    const auto v = lik_view_from_row(ctx, draws.cols, draws.row(s));
    for (std::size_t i = 0; i < n_rows; ++i)
      out.m[s * n_units + unit_of[i]] += record_log_lik<double>(ctx, v, i);
  }
  return out;
}

struct WaicResult {
  double elpd = 0;
  double p_eff = 0;
  double se = 0;
  std::vector<double> pointwise;  // per-unit elpd contributions
  std::string label;
};

class DegenerateDraws : public std::runtime_error {
 public:
  DegenerateDraws() : std::runtime_error("WAIC needs at least two draws") {}
};

inline WaicResult waic(const PointwiseLogLik& ll) {
  if (ll.n_draws < 2) throw DegenerateDraws();
  WaicResult res;
  res.pointwise.resize(ll.n_units);
  const double log_s = std::log(static_cast<double>(ll.n_draws));
  for (std::size_t u = 0; u < ll.n_units; ++u) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ll.n_draws; ++s) mx = std::max(mx, ll.at(s, u));
    double sum_exp = 0, mean = 0;
    for (std::size_t s = 0; s < ll.n_draws; ++s) {
      sum_exp += std::exp(ll.at(s, u) - mx);
      mean += ll.at(s, u);
    }
    mean /= static_cast<double>(ll.n_draws);
    double var = 0;
    for (std::size_t s = 0; s < ll.n_draws; ++s) {
      const double d = ll.at(s, u) - mean;
      var += d * d;
    }
    var /= static_cast<double>(ll.n_draws - 1);
    const double lpd = mx + std::log(sum_exp) - log_s;
    res.pointwise[u] = lpd - var;
    res.elpd += lpd - var;
    res.p_eff += var;
  }
  double mean_pw = res.elpd / static_cast<double>(ll.n_units);
  double var_pw = 0;
  for (double e : res.pointwise) var_pw += (e - mean_pw) * (e - mean_pw);
  var_pw /= static_cast<double>(ll.n_units - (ll.n_units > 1 ? 1 : 0));
  res.se = std::sqrt(static_cast<double>(ll.n_units) * var_pw);
  return res;
}

// Raw (unsmoothed) importance-sampling LOO.  No Pareto smoothing is applied,
// so the estimate can be noisy when the posterior is influential for a unit;
// callers are expected to surface the accompanying warning.
struct LooResult {
  double elpd = 0;
  double se = 0;
  std::vector<double> pointwise;
  std::string warning =
      "raw importance sampling without smoothing; estimates may be unstable";
};

inline LooResult loo_raw_importance(const PointwiseLogLik& ll) {
  if (ll.n_draws < 2) throw DegenerateDraws();
  LooResult res;
  res.pointwise.resize(ll.n_units);
  const double log_s = std::log(static_cast<double>(ll.n_draws));
  for (std::size_t u = 0; u < ll.n_units; ++u) {
    // log 1/mean(exp(-ll)) = -(logsumexp(-ll) - log S)
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ll.n_draws; ++s) mx = std::max(mx, -ll.at(s, u));
    double sum_exp = 0;
    for (std::size_t s = 0; s < ll.n_draws; ++s)
      sum_exp += std::exp(-ll.at(s, u) - mx);
    res.pointwise[u] = -(mx + std::log(sum_exp) - log_s);
    res.elpd += res.pointwise[u];
  }
  double mean_pw = res.elpd / static_cast<double>(ll.n_units);
  double var_pw = 0;
  for (double e : res.pointwise) var_pw += (e - mean_pw) * (e - mean_pw);
  var_pw /= static_cast<double>(ll.n_units - (ll.n_units > 1 ? 1 : 0));
  res.se = std::sqrt(static_cast<double>(ll.n_units) * var_pw);
  return res;
}

class UnitMismatch : public std::invalid_argument {
 public:
  UnitMismatch()
      : std::invalid_argument(
            "model comparison requires identical units across models") {}
};

struct CompareRow {
  std::string label;
  double elpd = 0;
  double elpd_diff = 0;
  double se_diff = 0;
};

// Ranking relative to the best model; diff standard errors from the
// unit-level paired differences.
inline std::vector<CompareRow> compare(const std::vector<WaicResult>& models) {
  if (models.empty()) return {};
  const std::size_t n = models[0].pointwise.size();
  for (const auto& m : models)
    if (m.pointwise.size() != n) throw UnitMismatch();
  std::size_t best = 0;
  for (std::size_t k = 1; k < models.size(); ++k)
    if (models[k].elpd > models[best].elpd) best = k;
  std::vector<CompareRow> rows;
  for (std::size_t k = 0; k < models.size(); ++k) {
    CompareRow r;
    r.label = models[k].label.empty() ? "model" + std::to_string(k + 1)
                                      : models[k].label;
    r.elpd = models[k].elpd;
    r.elpd_diff = models[k].elpd - models[best].elpd;
    if (k == best) {
      r.se_diff = 0;
    } else {
      double mean = 0;
      for (std::size_t u = 0; u < n; ++u)
        mean += models[k].pointwise[u] - models[best].pointwise[u];
      mean /= static_cast<double>(n);
      double var = 0;
      for (std::size_t u = 0; u < n; ++u) {
        const double d =
            models[k].pointwise[u] - models[best].pointwise[u] - mean;
        var += d * d;
      }
      var /= static_cast<double>(n - (n > 1 ? 1 : 0));
      r.se_diff = std::sqrt(static_cast<double>(n) * var);
    }
    rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(),
            [](const CompareRow& a, const CompareRow& b) {
              return a.elpd_diff > b.elpd_diff;
            });
  return rows;
}

}  // namespace survmc
