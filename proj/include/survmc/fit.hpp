#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "survmc/diagnostics.hpp"
#include "survmc/model.hpp"
#include "survmc/optimize.hpp"
#include "survmc/rng.hpp"
#include "survmc/sampler.hpp"

// Model-level fitting: runs the sampler, converts unconstrained draws to
// named constrained parameters (natural parameterisation: the intercept is
// back-transformed from the internal centered/shifted scale), and stores
// a new-cluster effect draw per kept iteration for later predictions.

namespace survmc {

// Column offsets of the named constrained draw matrix.
struct ReportLayout {
  std::size_t intercept = 0;
  std::size_t beta = 1;
  std::vector<std::size_t> tve;
  std::size_t aux = 0;
  std::size_t aux_n = 0;
  std::vector<std::size_t> smooth;
  struct ReCols {
    std::size_t sd = 0;    // dim entries
    std::size_t corr = 0;  // 1 entry when dim == 2
    std::size_t b = 0;     // levels x dim entries (level-major)
    std::size_t bnew = 0;  // dim entries
  };
  std::vector<ReCols> re;
  std::size_t lp = 0;
  std::size_t n_cols = 0;
};

struct FitDraws {
  std::vector<std::string> names;
  ReportLayout cols;
  std::size_t n_cols = 0;
  std::vector<double> draws;  // row-major, n_draws x n_cols
  std::vector<int> chain_id;
  int n_chains = 0;
  SamplerDiagnostics stats;

  std::span<const double> row(std::size_t s) const {
    return {draws.data() + s * n_cols, n_cols};
  }
  std::size_t n_draws() const { return chain_id.size(); }

  std::size_t column(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("no parameter " + name);
    return static_cast<std::size_t>(it - names.begin());
  }
  std::vector<double> column_values(std::size_t c) const {
    std::vector<double> v(n_draws());
    for (std::size_t s = 0; s < v.size(); ++s) v[s] = draws[s * n_cols + c];
    return v;
  }
};

inline std::string re_term_name(const ModelContext& ctx, std::size_t f,
                                std::size_t d) {
  if (d == 0) return "(Intercept)";
  return ctx.spec.covariate_names[*ctx.spec.re[f].slope_covariate];
}

inline std::pair<std::vector<std::string>, ReportLayout> report_names(
    const ModelContext& ctx) {
  const ModelSpec& spec = ctx.spec;
  std::vector<std::string> names;
  ReportLayout rl;
  rl.intercept = names.size();
  names.push_back("(Intercept)");
  rl.beta = names.size();
  for (const auto& c : spec.covariate_names) names.push_back(c);
  for (const auto& t : spec.tve) {
    rl.tve.push_back(names.size());
    for (std::size_t l = 1; l <= t.n_deviation(); ++l)
      names.push_back("tve(" + spec.covariate_names[t.covariate_index] + "):" +
                      std::to_string(l));
  }
  rl.aux = names.size();
  rl.aux_n = spec.n_aux();
  switch (spec.baseline) {
    case Baseline::Weibull:
    case Baseline::WeibullAft:
      names.push_back("weibull-shape");
      break;
    case Baseline::Gompertz:
      names.push_back("gompertz-scale");
      break;
    case Baseline::MSpline:
      for (std::size_t l = 1; l <= rl.aux_n; ++l)
        names.push_back("m-splines-coef" + std::to_string(l));
      break;
    case Baseline::BSpline:
      for (std::size_t l = 1; l <= rl.aux_n; ++l)
        names.push_back("b-splines-coef" + std::to_string(l));
      break;
    default:
      break;
  }
  for (const auto& t : spec.tve) {
    rl.smooth.push_back(names.size());
    names.push_back("smooth-sd[" + spec.covariate_names[t.covariate_index] + "]");
  }
  for (std::size_t f = 0; f < spec.re.size(); ++f) {
    const auto& term = spec.re[f];
    const std::size_t dim = term.dim();
    ReportLayout::ReCols rc;
    rc.sd = names.size();
    for (std::size_t d = 0; d < dim; ++d)
      names.push_back("sd[" + term.factor + "|" + re_term_name(ctx, f, d) + "]");
    if (dim == 2) {
      rc.corr = names.size();
      names.push_back("corr[" + term.factor + "]");
    }
    rc.b = names.size();
    const auto& levels = ctx.data.factor_levels.at(term.factor);
    for (const auto& lvl : levels)
      for (std::size_t d = 0; d < dim; ++d)
        names.push_back("b[" + term.factor + ":" + lvl + "|" +
                        re_term_name(ctx, f, d) + "]");
    rc.bnew = names.size();
    for (std::size_t d = 0; d < dim; ++d)
      names.push_back("bnew[" + term.factor + "|" + re_term_name(ctx, f, d) + "]");
    rl.re.push_back(rc);
  }
  rl.lp = names.size();
  names.push_back("lp__");
  rl.n_cols = names.size();
  return {names, rl};
}

// Natural-scale intercept: the sampled intercept is on the centered scale.
inline double natural_intercept(const ModelContext& ctx,
                                const Params<double>& p) {
  double b0 = p.intercept_c;
  for (std::size_t i = 0; i < p.beta.size(); ++i)
    b0 -= p.beta[i] * ctx.x_mean[i];
  return b0;
}

inline void fill_report_row(const ModelContext& ctx, const ReportLayout& rl,
                            const Params<double>& p, double lp,
                            CounterRng& bnew_rng, std::span<double> row) {
  row[rl.intercept] = natural_intercept(ctx, p);
  for (std::size_t i = 0; i < p.beta.size(); ++i) row[rl.beta + i] = p.beta[i];
  for (std::size_t k = 0; k < p.tve_dev.size(); ++k)
    for (std::size_t l = 0; l < p.tve_dev[k].size(); ++l)
      row[rl.tve[k] + l] = p.tve_dev[k][l];
  for (std::size_t i = 0; i < p.aux.size(); ++i) row[rl.aux + i] = p.aux[i];
  for (std::size_t k = 0; k < p.smooth_sd.size(); ++k)
    row[rl.smooth[k]] = p.smooth_sd[k];
  for (std::size_t f = 0; f < p.re.size(); ++f) {
    const auto& re = p.re[f];
    const std::size_t dim = ctx.layout.re[f].dim;
    for (std::size_t d = 0; d < dim; ++d) row[rl.re[f].sd + d] = re.sigma[d];
    if (dim == 2) row[rl.re[f].corr] = re.Lcorr[1 * dim + 0];
    for (std::size_t i = 0; i < re.b.size(); ++i) row[rl.re[f].b + i] = re.b[i];
    // new-cluster draw: b~ = diag(sigma) Lcorr eps, eps ~ N(0, I)
    std::vector<double> eps(dim);
    for (auto& e : eps) e = bnew_rng.normal();
    for (std::size_t d = 0; d < dim; ++d) {
      double acc = 0;
      for (std::size_t k = 0; k <= d; ++k) acc += re.Lcorr[d * dim + k] * eps[k];
      row[rl.re[f].bnew + d] = re.sigma[d] * acc;
    }
  }
  row[rl.lp] = lp;
}

struct FitResult {
  FitDraws draws;
  NutsConfig config;
};

class AllDivergent : public std::runtime_error {
 public:
  AllDivergent()
      : std::runtime_error(
            "every post-warmup transition diverged; the posterior is "
            "numerically intractable at this configuration") {}
};

inline FitResult fit_model(const ModelContext& ctx, const NutsConfig& cfg) {
  PosteriorTarget target(ctx);
  FitResult out;
  out.config = cfg;
  auto [names, rl] = report_names(ctx);
  out.draws.names = std::move(names);
  out.draws.cols = rl;
  out.draws.n_cols = rl.n_cols;
  out.draws.n_chains = cfg.chains;
  const std::size_t total = static_cast<std::size_t>(cfg.chains) * cfg.iters;
  out.draws.draws.assign(total * rl.n_cols, 0.0);

  RawDraws raw = nuts_sample(
      target, cfg,
      [&](int chain, int it, std::span<const double> q, double lp) {
        const std::size_t s =
            static_cast<std::size_t>(chain) * cfg.iters + it;
        Params<double> p = constrain<double>(ctx, q);
        CounterRng rng(cfg.seed ^ 0x6e77636c75737472ULL, s);
        fill_report_row(ctx, rl, p, lp,
                        rng,
                        {out.draws.draws.data() + s * rl.n_cols, rl.n_cols});
      });
  out.draws.chain_id = std::move(raw.chain_id);
  out.draws.stats = std::move(raw.stats);
  if (!out.draws.stats.divergent.empty()) {
    bool all = true;
    for (auto d : out.draws.stats.divergent) all = all && d != 0;
    if (all) throw AllDivergent();
  }
  return out;
}

// MAP estimate with named parameters.
struct MapResult {
  std::vector<std::string> names;
  std::vector<double> values;  // same layout as FitDraws rows, lp last
  double logp = 0;
  double grad_norm = 0;
  int iterations = 0;
  bool converged = false;
};

inline MapResult map_estimate(const ModelContext& ctx, std::uint64_t seed = 1,
                              int max_iters = 1000, int retries = 20) {
  PosteriorTarget target(ctx);
  CounterRng rng(seed, 0xabcdULL);
  OptimResult best;
  bool have = false;
  for (int r = 0; r < retries; ++r) {
    std::vector<double> x(target.dim());
    for (auto& xi : x) xi = rng.uniform(-2.0, 2.0);
    if (!std::isfinite(target.logp(x))) continue;
    try {
      OptimResult res = lbfgs_maximize(target, std::move(x), max_iters);
      if (!have || res.logp > best.logp) {
        best = std::move(res);
        have = true;
      }
      if (best.converged) break;
    } catch (const std::exception&) {
      continue;
    }
  }
  if (!have) throw NonFiniteInit();
  auto [names, rl] = report_names(ctx);
  MapResult mr;
  mr.names = std::move(names);
  mr.values.assign(rl.n_cols, 0.0);
  Params<double> p = constrain<double>(ctx, best.x);
  CounterRng bnew_rng(seed, 0);
  fill_report_row(ctx, rl, p, best.logp, bnew_rng, mr.values);
  mr.logp = best.logp;
  mr.grad_norm = best.grad_norm;
  mr.iterations = best.iterations;
  mr.converged = best.converged;
  return mr;
}

// --- posterior summaries ---------------------------------------------------

inline double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - lo) * (v[lo + 1] - v[lo]);
}

inline double median_of(std::vector<double> v) { return quantile_of(std::move(v), 0.5); }

// 1.4826 * median absolute deviation.
inline double mad_sd_of(const std::vector<double>& v) {
  const double med = median_of(v);
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::fabs(v[i] - med);
  return 1.4826 * median_of(std::move(dev));
}

}  // namespace survmc
