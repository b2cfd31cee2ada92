#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmc/fit.hpp"
#include "survmc/model.hpp"
#include "survmc/model_eval.hpp"

// Posterior predictive curves: per draw and covariate row, the survival /
// hazard / cumulative hazard / CDF (and logs) at requested times, summarised
// by the posterior median and an equal-tailed credible interval.  Rows with
// known cluster labels use that cluster's effect draws; unseen labels use
// the stored new-cluster draws, marginalising over the cluster distribution.

namespace survmc {

enum class PredQuantity { Surv, Cumhaz, Haz, Cdf, LogSurv, LogCumhaz, LogHaz, LogCdf };

inline PredQuantity parse_quantity(const std::string& s) {
  if (s == "surv") return PredQuantity::Surv;
  if (s == "cumhaz") return PredQuantity::Cumhaz;
  if (s == "haz") return PredQuantity::Haz;
  if (s == "cdf") return PredQuantity::Cdf;
  if (s == "logsurv") return PredQuantity::LogSurv;
  if (s == "logcumhaz") return PredQuantity::LogCumhaz;
  if (s == "loghaz") return PredQuantity::LogHaz;
  if (s == "logcdf") return PredQuantity::LogCdf;
  throw std::invalid_argument("unknown prediction quantity: " + s);
}

struct NewDataRow {
  std::vector<double> covariates;
  std::map<std::string, std::string> cluster_labels;
};

struct PredictionRequest {
  std::vector<NewDataRow> rows;
  PredQuantity quantity = PredQuantity::Surv;
  std::vector<double> times;
  std::optional<double> condition_time;
  bool standardise = false;
  double credible_level = 0.95;
};

struct PredictionFrame {
  struct Row {
    std::size_t id = 0;
    std::optional<double> cond_time;
    double time = 0;
    double median = 0, ci_lb = 0, ci_ub = 0;
  };
  std::vector<Row> rows;
  PredQuantity quantity = PredQuantity::Surv;
  bool standardised = false;
  bool conditional = false;
};

class ExtrapolationBeyondTmax : public std::invalid_argument {
 public:
  ExtrapolationBeyondTmax(double t, double tmax)
      : std::invalid_argument("prediction time " + std::to_string(t) +
                              " beyond the estimation horizon " +
                              std::to_string(tmax)) {}
};

class ConditionAfterPredictionTime : public std::invalid_argument {
 public:
  ConditionAfterPredictionTime()
      : std::invalid_argument(
          "condition time must precede every prediction time") {}
};

namespace pred_detail {

// Precomputation for one (row, time) pair: everything record_log_lik's
// machinery needs to evaluate H(t) (or the cumulative acceleration) and the
// hazard at t, independent of the draw.
struct Point {
  BoundWork bound;
  std::vector<double> base_row, tve_row;
};

struct PreparedRow {
  std::vector<double> xc;
  std::vector<std::size_t> level;     // index, or npos for a new cluster
  std::vector<double> z_slope;
  std::vector<Point> points;          // one per requested time (t > 0)
};

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

inline PreparedRow prepare_row(const ModelContext& ctx, const NewDataRow& row,
                               std::span<const double> times,
                               std::span<const double> breaks) {
  if (row.covariates.size() != ctx.spec.covariate_names.size())
    throw DimensionMismatch("newdata covariate count mismatch");
  PreparedRow pr;
  pr.xc.resize(row.covariates.size());
  for (std::size_t p = 0; p < pr.xc.size(); ++p)
    pr.xc[p] = row.covariates[p] - ctx.x_mean[p];
  for (std::size_t f = 0; f < ctx.spec.re.size(); ++f) {
    const auto& term = ctx.spec.re[f];
    auto it = row.cluster_labels.find(term.factor);
    std::size_t idx = npos;
    if (it != row.cluster_labels.end()) {
      const auto& levels = ctx.data.factor_levels.at(term.factor);
      auto found = std::find(levels.begin(), levels.end(), it->second);
      if (found != levels.end())
        idx = static_cast<std::size_t>(found - levels.begin());
    }
    pr.level.push_back(idx);
    pr.z_slope.push_back(term.slope_covariate
                             ? row.covariates[*term.slope_covariate]
                             : 0.0);
  }
  for (double t : times) {
    Point pt;
    if (t > 0) {
      pt.bound = detail::build_bound(ctx, row.covariates, t, breaks);
      detail::fill_base_row(ctx, t, pt.base_row);
      detail::fill_tve_row(ctx, row.covariates, t, pt.tve_row);
    }
    pr.points.push_back(std::move(pt));
  }
  return pr;
}

// eta0 for a prepared row under one draw, with new-cluster handling.
inline double eta0_for(const ModelContext& ctx, const FitDraws& draws,
                       std::span<const double> drow, const LikView<double>& v,
                       const PreparedRow& pr) {
  double eta = v.intercept_c;
  for (std::size_t p = 0; p < pr.xc.size(); ++p) eta += v.beta[p] * pr.xc[p];
  for (std::size_t f = 0; f < pr.level.size(); ++f) {
    const std::size_t dim = ctx.layout.re[f].dim;
    const double* b =
        pr.level[f] == npos
            ? drow.data() + draws.cols.re[f].bnew
            : drow.data() + draws.cols.re[f].b + pr.level[f] * dim;
    eta += b[0];
    if (dim == 2) eta += b[1] * pr.z_slope[f];
  }
  return eta;
}

// log survival at a prepared point for one draw.
inline double log_surv_at(const ModelContext& ctx, const LikView<double>& v,
                          const Point& pt, double eta0) {
  if (pt.bound.t <= 0) return 0.0;  // S(0) = 1 by definition
  if (!baseline_is_aft(ctx.spec.baseline))
    return -detail::cumulative_hazard(ctx, v, pt.bound, eta0);
  const double a = detail::cumulative_acceleration_at(ctx, v, pt.bound, eta0);
  return detail::aft_log_survival_at(ctx, v, a);
}

inline double log_haz_at(const ModelContext& ctx, const LikView<double>& v,
                         const Point& pt, double eta0) {
  const double eta_t = detail::eta_with_tve(v, pt.tve_row, eta0);
  if (!baseline_is_aft(ctx.spec.baseline))
    return detail::log_hazard_core(ctx.spec.baseline, v, pt.base_row,
                                   pt.bound.t, pt.bound.log_t, eta_t);
  double lh = -eta_t;
  if (ctx.spec.baseline == Baseline::WeibullAft) {
    const double a = detail::cumulative_acceleration_at(ctx, v, pt.bound, eta0);
    lh += std::log(v.aux[0]) + (v.aux[0] - 1.0) * std::log(a);
  }
  return lh;
}

inline double quantity_from_logsurv(PredQuantity q, double log_surv) {
  switch (q) {
    case PredQuantity::Surv: return std::exp(log_surv);
    case PredQuantity::LogSurv: return log_surv;
    case PredQuantity::Cumhaz: return -log_surv;
    case PredQuantity::LogCumhaz: return std::log(-log_surv);
    case PredQuantity::Cdf: return -std::expm1(log_surv);
    case PredQuantity::LogCdf:
      return log_surv < 0 ? log1m_exp(log_surv)
                          : -std::numeric_limits<double>::infinity();
    default: throw std::logic_error("hazard quantity routed to survival path");
  }
}

}  // namespace pred_detail

// Core evaluation: per draw s and (row, time), the requested quantity.
// Returns a draws-major cube flattened as [s][row][time].
inline std::vector<double> predict_draw_values(const ModelContext& ctx,
                                               const FitDraws& draws,
                                               const PredictionRequest& req) {
  for (double t : req.times) {
    if (t < 0) throw std::invalid_argument("negative prediction time");
    if (t > ctx.t_max * (1 + 1e-12))
      throw ExtrapolationBeyondTmax(t, ctx.t_max);
  }
  const auto breaks = detail::quad_breakpoints(ctx);
  std::vector<pred_detail::PreparedRow> prows;
  for (const auto& r : req.rows)
    prows.push_back(pred_detail::prepare_row(ctx, r, req.times, breaks));

  const bool haz_quantity =
      req.quantity == PredQuantity::Haz || req.quantity == PredQuantity::LogHaz;
  const std::size_t S = draws.n_draws(), R = prows.size(), T = req.times.size();
  std::vector<double> out(S * R * T);

  // hazard at t = 0 is reported as the right-limit at the smallest positive
  // requested time (spline baselines are not defined at 0 on the log scale)
  double smallest_pos = 0;
  for (double t : req.times)
    if (t > 0 && (smallest_pos == 0 || t < smallest_pos)) smallest_pos = t;
  std::vector<pred_detail::Point> zero_sub;
  if (haz_quantity) {
    const double t0 = smallest_pos > 0 ? smallest_pos : ctx.t_max * 1e-6;
    for (const auto& r : req.rows) {
      pred_detail::Point pt;
      pt.bound = detail::build_bound(ctx, r.covariates, t0, breaks);
      detail::fill_base_row(ctx, t0, pt.base_row);
      detail::fill_tve_row(ctx, r.covariates, t0, pt.tve_row);
      zero_sub.push_back(std::move(pt));
    }
  }

  for (std::size_t s = 0; s < S; ++s) {
    const auto drow = draws.row(s);
    const auto v = lik_view_from_row(ctx, draws.cols, drow);
    for (std::size_t r = 0; r < R; ++r) {
      const double eta0 = pred_detail::eta0_for(ctx, draws, drow, v, prows[r]);
      for (std::size_t t = 0; t < T; ++t) {
        double val;
        if (haz_quantity) {
          const auto& pt =
              req.times[t] > 0 ? prows[r].points[t] : zero_sub[r];
          const double lh = pred_detail::log_haz_at(ctx, v, pt, eta0);
          val = req.quantity == PredQuantity::Haz ? std::exp(lh) : lh;
        } else {
          const double ls =
              pred_detail::log_surv_at(ctx, v, prows[r].points[t], eta0);
          val = pred_detail::quantity_from_logsurv(req.quantity, ls);
        }
        out[(s * R + r) * T + t] = val;
      }
    }
  }
  return out;
}

namespace pred_detail {

inline PredictionFrame summarise(const PredictionRequest& req,
                                 std::span<const double> values, std::size_t S,
                                 std::size_t R, std::size_t T) {
  PredictionFrame frame;
  frame.quantity = req.quantity;
  frame.standardised = req.standardise;
  frame.conditional = req.condition_time.has_value();
  const double alpha = 1.0 - req.credible_level;
  std::vector<double> col(S);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) col[s] = values[(s * R + r) * T + t];
      PredictionFrame::Row row;
      row.id = r + 1;
      row.cond_time = req.condition_time;
      row.time = req.times[t];
      row.median = quantile_of(col, 0.5);
      row.ci_lb = quantile_of(col, alpha / 2);
      row.ci_ub = quantile_of(col, 1.0 - alpha / 2);
      frame.rows.push_back(row);
    }
  }
  return frame;
}

}  // namespace pred_detail

inline PredictionFrame predict_curves(const ModelContext& ctx,
                                      const FitDraws& draws,
                                      const PredictionRequest& req) {
  if (req.standardise)
    throw std::invalid_argument("use standardised_survival for standardise");
  if (req.condition_time)
    throw std::invalid_argument("use conditional_survival for conditioning");
  auto vals = predict_draw_values(ctx, draws, req);
  return pred_detail::summarise(req, vals, draws.n_draws(), req.rows.size(),
                                req.times.size());
}

// S(t)/S(C) per draw, for times t > C.
inline PredictionFrame conditional_survival(const ModelContext& ctx,
                                            const FitDraws& draws,
                                            const PredictionRequest& req) {
  if (!req.condition_time || !(*req.condition_time > 0))
    throw std::invalid_argument("conditional survival needs a condition time");
  const double C = *req.condition_time;
  for (double t : req.times)
    if (t < C) throw ConditionAfterPredictionTime();
  if (req.quantity != PredQuantity::Surv &&
      req.quantity != PredQuantity::LogSurv)
    throw std::invalid_argument("conditioning applies to survival predictions");

  PredictionRequest base = req;
  base.quantity = PredQuantity::LogSurv;
  base.condition_time.reset();
  auto vals = predict_draw_values(ctx, draws, base);
  PredictionRequest creq = base;
  creq.times = {C};
  auto cvals = predict_draw_values(ctx, draws, creq);

  const std::size_t S = draws.n_draws(), R = req.rows.size(),
                    T = req.times.size();
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t t = 0; t < T; ++t) {
        double& v = vals[(s * R + r) * T + t];
        v -= cvals[s * R + r];
        if (req.quantity == PredQuantity::Surv) v = std::exp(v);
      }
  return pred_detail::summarise(req, vals, S, R, T);
}

// Mean over rows of the per-draw survival probabilities.
inline PredictionFrame standardised_survival(const ModelContext& ctx,
                                             const FitDraws& draws,
                                             const PredictionRequest& req) {
  if (req.rows.empty())
    throw std::invalid_argument("standardisation needs at least one row");
  PredictionRequest base = req;
  base.quantity = PredQuantity::Surv;
  base.standardise = false;
  auto vals = predict_draw_values(ctx, draws, base);
  const std::size_t S = draws.n_draws(), R = req.rows.size(),
                    T = req.times.size();
  std::vector<double> avg(S * T, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t t = 0; t < T; ++t)
        avg[s * T + t] += vals[(s * R + r) * T + t] / static_cast<double>(R);
  PredictionRequest sreq = req;
  sreq.standardise = true;
  auto frame = pred_detail::summarise(sreq, avg, S, 1, T);
  return frame;
}

// Posterior-predictive check: standardised survival over the estimation
// sample against the Kaplan-Meier curve on a uniform grid over (0, T_max].
struct PsCheckResult {
  std::vector<double> times;
  std::vector<double> km;
  std::vector<double> pred_median, pred_lb, pred_ub;
  double max_abs_discrepancy = 0;
};

inline PsCheckResult ps_check(const ModelContext& ctx, const FitDraws& draws,
                              std::size_t grid_size = 20) {
  const KaplanMeierCurve km = kaplan_meier(ctx.data);
  PredictionRequest req;
  req.quantity = PredQuantity::Surv;
  for (std::size_t g = 1; g <= grid_size; ++g)
    req.times.push_back(ctx.t_max * static_cast<double>(g) /
                        static_cast<double>(grid_size));
  for (const auto& rec : ctx.data.records) {
    NewDataRow row;
    row.covariates = rec.covariates;
    row.cluster_labels = rec.cluster_labels;
    req.rows.push_back(std::move(row));
  }
  auto frame = standardised_survival(ctx, draws, req);
  PsCheckResult res;
  res.times = req.times;
  for (std::size_t t = 0; t < req.times.size(); ++t) {
    res.km.push_back(km.at(req.times[t]));
    res.pred_median.push_back(frame.rows[t].median);
    res.pred_lb.push_back(frame.rows[t].ci_lb);
    res.pred_ub.push_back(frame.rows[t].ci_ub);
    res.max_abs_discrepancy =
        std::max(res.max_abs_discrepancy,
                 std::fabs(res.km.back() - res.pred_median.back()));
  }
  return res;
}

}  // namespace survmc
