#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "survmc/ad.hpp"
#include "survmc/aft.hpp"
#include "survmc/data.hpp"
#include "survmc/hazard.hpp"
#include "survmc/linear_predictor.hpp"
#include "survmc/priors.hpp"
#include "survmc/quadrature.hpp"
#include "survmc/splines.hpp"
#include "survmc/transforms.hpp"

// Model assembly: the censored-data log likelihood over all baselines
// (closed forms where they exist, composite Gauss-Kronrod quadrature
// otherwise), the joint log posterior with its unconstrained
// parameterisation, and reverse-mode gradients.

namespace survmc {

struct ReTerm {
  std::string factor;
  std::optional<std::size_t> slope_covariate;  // (x | factor) -> dim 2
  std::size_t dim() const { return slope_covariate ? 2 : 1; }
};

struct PriorSet {
  ScalarPrior intercept = ScalarPrior::normal(0, 20);
  ScalarPrior coef = ScalarPrior::normal(0, 2.5);
  ScalarPrior aux = ScalarPrior::half_normal(2);  // Weibull / Gompertz gamma
  ScalarPrior bspline_coef = ScalarPrior::normal(0, 20);
  ScalarPrior smooth = ScalarPrior::exponential(1);  // tau_p
  double mspline_concentration = 1.0;
  CovariancePriorSpec covariance;
};

struct ModelSpec {
  Baseline baseline = Baseline::MSpline;
  std::optional<SplineConfig> baseline_spline;
  std::vector<std::string> covariate_names;
  std::vector<TveSpec> tve;
  std::vector<ReTerm> re;
  PriorSet priors;
  int qnodes = 15;
  bool prior_only = false;
  MeshConfig mesh{1, 4, 4.0};  // quadrature-path panels (sampling default)

  bool uses_quadrature() const {
    return !tve.empty() || baseline == Baseline::BSpline;
  }

  // Constrained auxiliary block size.
  std::size_t n_aux() const {
    switch (baseline) {
      case Baseline::Weibull:
      case Baseline::Gompertz:
      case Baseline::WeibullAft:
        return 1;
      case Baseline::MSpline:
        return baseline_spline->n_basis();
      case Baseline::BSpline:
        return baseline_spline->n_basis() - 1;
      default:
        return 0;
    }
  }

  void validate() const {
    if (baseline_has_spline(baseline) != baseline_spline.has_value())
      throw std::invalid_argument(
          "spline config present iff baseline is ms or bs");
    for (const auto& t : tve) {
      t.validate();
      if (t.covariate_index >= covariate_names.size())
        throw std::invalid_argument("TVE references unknown covariate");
    }
    for (const auto& r : re)
      if (r.slope_covariate && *r.slope_covariate >= covariate_names.size())
        throw std::invalid_argument("random slope references unknown covariate");
    if (qnodes != 7 && qnodes != 11 && qnodes != 15) throw UnsupportedOrder(qnodes);
    priors.intercept.validate();
    priors.coef.validate();
    priors.aux.validate();
    priors.bspline_coef.validate();
    priors.smooth.validate();
    if (!prior_positive_only(priors.smooth.family))
      throw std::invalid_argument("smoothing prior needs a positive-support family");
    if (!prior_positive_only(priors.aux.family))
      throw std::invalid_argument("aux prior needs a positive-support family");
    priors.covariance.validate();
  }
};

// --- unconstrained parameter layout --------------------------------------

struct ReLayout {
  std::size_t levels = 0;
  std::size_t dim = 1;
  std::size_t z_off = 0;        // raw effects (levels * dim)
  std::size_t tau_off = 0;      // log scale
  std::size_t simplex_off = 0;  // dim-1 stick-breaking values (dim > 1)
  std::size_t cpc_off = 0;      // dim(dim-1)/2 partial correlations (dim > 1)
};

struct ParamLayout {
  std::size_t n_unc = 0;
  std::size_t intercept_off = 0;
  std::size_t beta_off = 0;
  std::size_t P = 0;
  std::vector<std::pair<std::size_t, std::size_t>> tve_off;  // offset, count
  std::size_t aux_off = 0;
  std::size_t aux_unc = 0;
  std::vector<std::size_t> smooth_off;
  std::vector<ReLayout> re;
};

inline ParamLayout build_layout(const ModelSpec& spec,
                                std::span<const std::size_t> re_levels) {
  ParamLayout L;
  std::size_t off = 0;
  L.intercept_off = off++;
  L.beta_off = off;
  L.P = spec.covariate_names.size();
  off += L.P;
  for (const auto& t : spec.tve) {
    L.tve_off.emplace_back(off, t.n_deviation());
    off += t.n_deviation();
  }
  L.aux_off = off;
  switch (spec.baseline) {
    case Baseline::Weibull:
    case Baseline::Gompertz:
    case Baseline::WeibullAft:
      L.aux_unc = 1;
      break;
    case Baseline::MSpline:
      L.aux_unc = spec.baseline_spline->n_basis() - 1;  // stick-breaking
      break;
    case Baseline::BSpline:
      L.aux_unc = spec.baseline_spline->n_basis() - 1;  // identity
      break;
    default:
      L.aux_unc = 0;
  }
  off += L.aux_unc;
  for (std::size_t k = 0; k < spec.tve.size(); ++k) L.smooth_off.push_back(off++);
  for (std::size_t f = 0; f < spec.re.size(); ++f) {
    ReLayout rl;
    rl.levels = re_levels[f];
    rl.dim = spec.re[f].dim();
    rl.z_off = off;
    off += rl.levels * rl.dim;
    rl.tau_off = off++;
    if (rl.dim > 1) {
      rl.simplex_off = off;
      off += rl.dim - 1;
      rl.cpc_off = off;
      off += rl.dim * (rl.dim - 1) / 2;
    }
    L.re.push_back(rl);
  }
  L.n_unc = off;
  return L;
}

// --- constrained parameters ------------------------------------------------

template <class S>
struct Params {
  S intercept_c;  // intercept on the centered-covariate scale
  std::vector<S> beta;
  std::vector<std::vector<S>> tve_dev;
  std::vector<S> aux;  // gamma | M-spline simplex | B-spline coefficients
  std::vector<S> smooth_sd;
  struct Re {
    std::vector<S> z;      // raw (non-centered) effects, levels x dim
    S tau;                 // overall scale
    std::vector<S> pi;     // variance simplex (dim)
    std::vector<S> Lcorr;  // Cholesky of the correlation (dim x dim)
    std::vector<S> sigma;  // per-dimension standard deviations
    std::vector<S> b;      // actual effects, levels x dim
    Re() : tau(S(0.0)) {}
  };
  std::vector<Re> re;
  S log_jac;
  Params() : intercept_c(S(0.0)), log_jac(S(0.0)) {}
};

// --- per-record precomputation ---------------------------------------------

struct BoundWork {
  double t = 0;
  double log_t = 0;
  std::vector<double> irow;  // M-spline I-basis at t (closed-form path)
  QuadratureMesh mesh;       // quadrature path
  std::vector<double> qlogt;
  std::vector<double> qbase;  // node-major baseline basis rows
  std::vector<double> qtve;   // node-major TVE deviation rows scaled by x_p
};

struct RecordWork {
  CensoringStatus status = CensoringStatus::Event;
  double t_exit = 0, t_entry = 0, t_upper = 0;
  bool has_upper = false;
  std::vector<double> xc;            // centered covariates
  std::vector<std::size_t> level;    // per clustering factor
  std::vector<double> z_slope;       // per factor, slope covariate value
  std::vector<double> base_row_exit; // baseline basis at the exit time
  std::vector<double> tve_row_exit;  // concatenated TVE rows at exit (x-scaled)
  BoundWork exit, upper, entry;
};

class NonFiniteLogLik : public std::runtime_error {
 public:
  explicit NonFiniteLogLik(std::size_t record)
      : std::runtime_error("non-finite log likelihood at record " +
                           std::to_string(record)),
        record(record) {}
  std::size_t record;
};

struct ModelContext {
  ModelSpec spec;
  Dataset data;
  std::vector<double> x_mean;
  double intercept_shift = 0;  // sampling-scale shift, sign-adjusted for AFT
  double t_max = 0;
  std::shared_ptr<SplineBasis> baseline_basis;
  std::vector<std::shared_ptr<SplineBasis>> tve_basis;
  QuadratureRule rule;
  ParamLayout layout;
  std::vector<RecordWork> work;
  std::vector<std::size_t> re_levels;  // per factor

  std::size_t tve_row_width() const {
    std::size_t w = 0;
    for (const auto& t : spec.tve) w += t.n_deviation();
    return w;
  }
};

namespace detail {

inline std::vector<double> quad_breakpoints(const ModelContext& ctx) {
  std::vector<double> breaks;
  if (ctx.baseline_basis) {
    auto k = ctx.baseline_basis->config().knots.all();
    breaks.insert(breaks.end(), k.begin(), k.end());
  }
  for (const auto& tb : ctx.tve_basis) {
    auto k = tb->config().knots.all();
    breaks.insert(breaks.end(), k.begin(), k.end());
  }
  return breaks;
}

inline void fill_base_row(const ModelContext& ctx, double t,
                          std::vector<double>& out) {
  if (ctx.spec.baseline == Baseline::MSpline) {
    out = ctx.baseline_basis->mspline(t);
  } else if (ctx.spec.baseline == Baseline::BSpline) {
    auto full = ctx.baseline_basis->bspline(t);
    out.assign(full.begin() + 1, full.end());
  } else {
    out.clear();
  }
}

inline void fill_tve_row(const ModelContext& ctx,
                         std::span<const double> x_raw, double t,
                         std::vector<double>& out) {
  out.clear();
  for (std::size_t k = 0; k < ctx.spec.tve.size(); ++k) {
    const auto full = ctx.tve_basis[k]->bspline(t);
    const double xv = x_raw[ctx.spec.tve[k].covariate_index];
    for (std::size_t l = 1; l < full.size(); ++l) out.push_back(full[l] * xv);
  }
}

inline BoundWork build_bound(const ModelContext& ctx,
                             std::span<const double> x_raw, double t,
                             std::span<const double> breaks) {
  BoundWork bw;
  bw.t = t;
  bw.log_t = std::log(t);
  const bool quad = ctx.spec.uses_quadrature();
  if (!quad) {
    if (ctx.spec.baseline == Baseline::MSpline)
      bw.irow = ctx.baseline_basis->ispline(t);
    return bw;
  }
  MeshConfig cfg = ctx.spec.mesh;
  if (ctx.spec.baseline != Baseline::Weibull) cfg.grade_panels = 0;
  bw.mesh = build_mesh(t, ctx.rule, breaks, cfg);
  const std::size_t Q = bw.mesh.nodes.size();
  if (ctx.spec.baseline == Baseline::Weibull) {
    bw.qlogt.resize(Q);
    for (std::size_t q = 0; q < Q; ++q) bw.qlogt[q] = std::log(bw.mesh.nodes[q]);
  }
  std::vector<double> row;
  for (std::size_t q = 0; q < Q; ++q) {
    fill_base_row(ctx, bw.mesh.nodes[q], row);
    bw.qbase.insert(bw.qbase.end(), row.begin(), row.end());
    fill_tve_row(ctx, x_raw, bw.mesh.nodes[q], row);
    bw.qtve.insert(bw.qtve.end(), row.begin(), row.end());
  }
  return bw;
}

inline RecordWork build_record_work(const ModelContext& ctx,
                                    const SurvivalRecord& rec,
                                    std::span<const double> breaks) {
  RecordWork w;
  w.status = rec.status;
  w.t_exit = rec.time;
  w.t_entry = rec.entry_time;
  w.has_upper = rec.upper_time.has_value();
  if (w.has_upper) w.t_upper = *rec.upper_time;

  w.xc.resize(rec.covariates.size());
  for (std::size_t p = 0; p < w.xc.size(); ++p)
    w.xc[p] = rec.covariates[p] - ctx.x_mean[p];

  for (std::size_t f = 0; f < ctx.spec.re.size(); ++f) {
    const auto& term = ctx.spec.re[f];
    auto it = rec.cluster_labels.find(term.factor);
    if (it == rec.cluster_labels.end())
      throw std::invalid_argument("record lacks label for factor " + term.factor);
    w.level.push_back(ctx.data.level_index(term.factor, it->second));
    w.z_slope.push_back(term.slope_covariate
                            ? rec.covariates[*term.slope_covariate]
                            : 0.0);
  }

  fill_base_row(ctx, w.t_exit, w.base_row_exit);
  fill_tve_row(ctx, rec.covariates, w.t_exit, w.tve_row_exit);

  w.exit = build_bound(ctx, rec.covariates, w.t_exit, breaks);
  if (w.has_upper) w.upper = build_bound(ctx, rec.covariates, w.t_upper, breaks);
  if (w.t_entry > 0) w.entry = build_bound(ctx, rec.covariates, w.t_entry, breaks);
  return w;
}

}  // namespace detail

inline ModelContext build_context(ModelSpec spec, Dataset data) {
  spec.validate();
  data.validate();
  if (spec.covariate_names != data.covariate_names)
    throw std::invalid_argument("model covariates do not match the dataset");

  ModelContext ctx;
  ctx.spec = std::move(spec);
  ctx.data = std::move(data);
  ctx.rule = make_rule(ctx.spec.qnodes);
  ctx.t_max = ctx.data.t_max();

  const std::size_t P = ctx.spec.covariate_names.size();
  ctx.x_mean.assign(P, 0.0);
  if (!ctx.data.records.empty()) {
    for (const auto& r : ctx.data.records)
      for (std::size_t p = 0; p < P; ++p) ctx.x_mean[p] += r.covariates[p];
    for (double& m : ctx.x_mean) m /= static_cast<double>(ctx.data.records.size());
  }

  const auto counts = ctx.data.counts();
  const double follow_up = ctx.data.total_follow_up();
  double shift = 0;
  if (counts.events > 0 && follow_up > 0)
    shift = std::log(static_cast<double>(counts.events) / follow_up);
  ctx.intercept_shift = baseline_is_aft(ctx.spec.baseline) ? -shift : shift;

  if (ctx.spec.baseline_spline)
    ctx.baseline_basis = std::make_shared<SplineBasis>(*ctx.spec.baseline_spline);
  for (const auto& t : ctx.spec.tve)
    ctx.tve_basis.push_back(std::make_shared<SplineBasis>(t.spline));

  for (const auto& term : ctx.spec.re) {
    auto it = ctx.data.factor_levels.find(term.factor);
    if (it == ctx.data.factor_levels.end())
      throw std::invalid_argument("dataset lacks clustering factor " + term.factor);
    ctx.re_levels.push_back(it->second.size());
  }

  ctx.layout = build_layout(ctx.spec, ctx.re_levels);

  const auto breaks = detail::quad_breakpoints(ctx);
  ctx.work.reserve(ctx.data.records.size());
  for (const auto& rec : ctx.data.records)
    ctx.work.push_back(detail::build_record_work(ctx, rec, breaks));
  return ctx;
}

// --- scalar-generic dot helpers -------------------------------------------

template <class S>
S s_dot(std::span<const double> w, std::span<const S> x, double c0 = 0.0) {
  if constexpr (std::is_same_v<S, ad::Var>) {
    return ad::dot(w, x, c0);
  } else {
    double acc = c0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
    return acc;
  }
}

template <class S>
S s_dot_sv(std::span<const S> w, std::span<const S> x) {
  if constexpr (std::is_same_v<S, ad::Var>) {
    return ad::dot(w, x);
  } else {
    double acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
    return acc;
  }
}

// --- constrain / unconstrain -----------------------------------------------

template <class S>
Params<S> constrain(const ModelContext& ctx, std::span<const S> y) {
  const ParamLayout& L = ctx.layout;
  const ModelSpec& spec = ctx.spec;
  Params<S> p;
  p.log_jac = s_const_like(y[0], 0.0);
  p.intercept_c = y[L.intercept_off] + ctx.intercept_shift;
  p.beta.assign(y.begin() + L.beta_off, y.begin() + L.beta_off + L.P);
  for (std::size_t k = 0; k < spec.tve.size(); ++k) {
    auto [off, n] = L.tve_off[k];
    p.tve_dev.emplace_back(y.begin() + off, y.begin() + off + n);
  }
  switch (spec.baseline) {
    case Baseline::Weibull:
    case Baseline::Gompertz:
    case Baseline::WeibullAft:
      p.aux.push_back(positive_constrain(y[L.aux_off], p.log_jac));
      break;
    case Baseline::MSpline:
      p.aux = simplex_constrain(y.subspan(L.aux_off, L.aux_unc), p.log_jac);
      break;
    case Baseline::BSpline:
      p.aux.assign(y.begin() + L.aux_off, y.begin() + L.aux_off + L.aux_unc);
      break;
    default:
      break;
  }
  for (std::size_t k = 0; k < spec.tve.size(); ++k)
    p.smooth_sd.push_back(positive_constrain(y[L.smooth_off[k]], p.log_jac));

  for (std::size_t f = 0; f < spec.re.size(); ++f) {
    const ReLayout& rl = L.re[f];
    typename Params<S>::Re re;
    re.z.assign(y.begin() + rl.z_off,
                y.begin() + rl.z_off + rl.levels * rl.dim);
    re.tau = positive_constrain(y[rl.tau_off], p.log_jac);
    if (rl.dim == 1) {
      re.pi = {s_const_like(y[0], 1.0)};
      re.Lcorr = {s_const_like(y[0], 1.0)};
      re.sigma = {re.tau};
    } else {
      re.pi = simplex_constrain(y.subspan(rl.simplex_off, rl.dim - 1), p.log_jac);
      re.Lcorr = cholesky_corr_constrain(
          y.subspan(rl.cpc_off, rl.dim * (rl.dim - 1) / 2), rl.dim, p.log_jac);
      chol_to_corr_log_jacobian(std::span<const S>(re.Lcorr), rl.dim, p.log_jac);
      for (std::size_t d = 0; d < rl.dim; ++d)
        re.sigma.push_back(sm_sqrt(re.pi[d] * static_cast<double>(rl.dim)) *
                           re.tau);
    }
    // non-centered: b_j = diag(sigma) Lcorr z_j
    re.b.reserve(rl.levels * rl.dim);
    for (std::size_t j = 0; j < rl.levels; ++j)
      for (std::size_t d = 0; d < rl.dim; ++d) {
        S acc = re.Lcorr[d * rl.dim + 0] * re.z[j * rl.dim + 0];
        for (std::size_t k = 1; k <= d; ++k)
          acc += re.Lcorr[d * rl.dim + k] * re.z[j * rl.dim + k];
        re.b.push_back(re.sigma[d] * acc);
      }
    p.re.push_back(std::move(re));
  }
  return p;
}

inline std::vector<double> unconstrain(const ModelContext& ctx,
                                       const Params<double>& p) {
  const ParamLayout& L = ctx.layout;
  std::vector<double> y(L.n_unc, 0.0);
  y[L.intercept_off] = p.intercept_c - ctx.intercept_shift;
  for (std::size_t i = 0; i < L.P; ++i) y[L.beta_off + i] = p.beta[i];
  for (std::size_t k = 0; k < L.tve_off.size(); ++k)
    for (std::size_t i = 0; i < L.tve_off[k].second; ++i)
      y[L.tve_off[k].first + i] = p.tve_dev[k][i];
  switch (ctx.spec.baseline) {
    case Baseline::Weibull:
    case Baseline::Gompertz:
    case Baseline::WeibullAft:
      y[L.aux_off] = positive_unconstrain(p.aux[0]);
      break;
    case Baseline::MSpline: {
      auto v = simplex_unconstrain(p.aux);
      for (std::size_t i = 0; i < v.size(); ++i) y[L.aux_off + i] = v[i];
      break;
    }
    case Baseline::BSpline:
      for (std::size_t i = 0; i < L.aux_unc; ++i) y[L.aux_off + i] = p.aux[i];
      break;
    default:
      break;
  }
  for (std::size_t k = 0; k < L.smooth_off.size(); ++k)
    y[L.smooth_off[k]] = positive_unconstrain(p.smooth_sd[k]);
  for (std::size_t f = 0; f < L.re.size(); ++f) {
    const ReLayout& rl = L.re[f];
    const auto& re = p.re[f];
    for (std::size_t i = 0; i < rl.levels * rl.dim; ++i)
      y[rl.z_off + i] = re.z[i];
    y[rl.tau_off] = positive_unconstrain(re.tau);
    if (rl.dim > 1) {
      auto v = simplex_unconstrain(re.pi);
      for (std::size_t i = 0; i < v.size(); ++i) y[rl.simplex_off + i] = v[i];
      auto c = cholesky_corr_unconstrain(re.Lcorr, rl.dim);
      for (std::size_t i = 0; i < c.size(); ++i) y[rl.cpc_off + i] = c[i];
    }
  }
  return y;
}

// --- likelihood --------------------------------------------------------------

// Minimal view of the parameters the likelihood needs; also constructible
// from a stored posterior draw.
template <class S>
struct LikView {
  S intercept_c;
  std::span<const S> beta;
  std::vector<std::span<const S>> tve;
  std::span<const S> aux;
  std::vector<std::span<const S>> b;  // per factor, levels x dim
  LikView() : intercept_c(S(0.0)) {}
};

template <class S>
LikView<S> lik_view(const Params<S>& p) {
  LikView<S> v;
  v.intercept_c = p.intercept_c;
  v.beta = p.beta;
  for (const auto& t : p.tve_dev) v.tve.push_back(std::span<const S>(t));
  v.aux = p.aux;
  for (const auto& re : p.re) v.b.push_back(std::span<const S>(re.b));
  return v;
}

namespace detail {

// eta contribution that is constant in time for one record.
template <class S>
S eta_const(const ModelContext& ctx, const LikView<S>& v, const RecordWork& r) {
  S eta = s_dot(std::span<const double>(r.xc), v.beta) + v.intercept_c;
  for (std::size_t f = 0; f < v.b.size(); ++f) {
    const std::size_t dim = ctx.layout.re[f].dim;
    const std::size_t j = r.level[f];
    eta += v.b[f][j * dim];
    if (dim == 2) eta += v.b[f][j * dim + 1] * r.z_slope[f];
  }
  return eta;
}

// Cumulative hazard at one bound (hazard-scale families).
template <class S>
S cumulative_hazard(const ModelContext& ctx, const LikView<S>& v,
                    const BoundWork& bw, const S& eta0) {
  const Baseline fam = ctx.spec.baseline;
  if (!ctx.spec.uses_quadrature()) {
    switch (fam) {
      case Baseline::Exponential:
        return sm_exp(eta0 + bw.log_t);
      case Baseline::Weibull:
        return sm_exp(v.aux[0] * bw.log_t + eta0);
      case Baseline::Gompertz:
        return sm_exp(log_expm1(v.aux[0] * bw.t) - sm_log(v.aux[0]) + eta0);
      case Baseline::MSpline:
        return s_dot(std::span<const double>(bw.irow), v.aux) * sm_exp(eta0);
      default:
        throw std::logic_error("quadrature required for this baseline");
    }
  }
  // quadrature path: H = sum_q W_q exp(log h(u_q))
  const std::size_t Q = bw.mesh.nodes.size();
  const std::size_t base_w =
      fam == Baseline::MSpline
          ? ctx.baseline_basis->size()
          : (fam == Baseline::BSpline ? ctx.baseline_basis->size() - 1 : 0);
  const std::size_t tve_w = ctx.tve_row_width();
  if constexpr (std::is_same_v<S, ad::Var>) {
    // Hot path: each h(u_q) = exp(eta0 + tve + family terms) becomes ONE tape
    // node whose argument weights carry the exp and log chain rules folded
    // in, instead of a handful of elementary nodes.
    ad::Tape& tape = ad::active_tape();
    const double eta0v = eta0.val();
    const double gammav = v.aux.empty() ? 1.0 : v.aux[0].val();
    const double log_gammav =
        fam == Baseline::Weibull ? std::log(gammav) : 0.0;
    std::vector<ad::Var> hq;
    hq.reserve(Q);
    for (std::size_t q = 0; q < Q; ++q) {
      double lv = eta0v;
      const double* trow = bw.qtve.data() + q * tve_w;
      {
        std::size_t c = 0;
        for (std::size_t k = 0; k < v.tve.size(); ++k)
          for (std::size_t l = 0; l < v.tve[k].size(); ++l, ++c)
            lv += trow[c] * v.tve[k][l].val();
      }
      double mdot = 0;
      const double* brow = bw.qbase.data() + q * base_w;
      switch (fam) {
        case Baseline::Exponential:
          break;
        case Baseline::Weibull:
          lv += log_gammav + (gammav - 1.0) * bw.qlogt[q];
          break;
        case Baseline::Gompertz:
          lv += gammav * bw.mesh.nodes[q];
          break;
        case Baseline::MSpline:
          for (std::size_t l = 0; l < base_w; ++l)
            mdot += brow[l] * v.aux[l].val();
          lv += std::log(mdot);
          break;
        case Baseline::BSpline:
          for (std::size_t l = 0; l < base_w; ++l)
            lv += brow[l] * v.aux[l].val();
          break;
        default:
          throw std::logic_error("AFT family in hazard path");
      }
      const double hv = std::exp(lv);
      tape.begin_nary();
      tape.push_arg(eta0.index(), hv);
      {
        std::size_t c = 0;
        for (std::size_t k = 0; k < v.tve.size(); ++k)
          for (std::size_t l = 0; l < v.tve[k].size(); ++l, ++c)
            tape.push_arg(v.tve[k][l].index(), hv * trow[c]);
      }
      switch (fam) {
        case Baseline::Weibull:
          tape.push_arg(v.aux[0].index(), hv * (1.0 / gammav + bw.qlogt[q]));
          break;
        case Baseline::Gompertz:
          tape.push_arg(v.aux[0].index(), hv * bw.mesh.nodes[q]);
          break;
        case Baseline::MSpline:
          for (std::size_t l = 0; l < base_w; ++l)
            tape.push_arg(v.aux[l].index(), hv * brow[l] / mdot);
          break;
        case Baseline::BSpline:
          for (std::size_t l = 0; l < base_w; ++l)
            tape.push_arg(v.aux[l].index(), hv * brow[l]);
          break;
        default:
          break;
      }
      hq.emplace_back(hv, tape.end_nary());
    }
    return ad::dot(std::span<const double>(bw.mesh.weights),
                   std::span<const ad::Var>(hq));
  } else {
    std::vector<S> logh(Q, eta0);
    if (tve_w > 0) {
      for (std::size_t q = 0; q < Q; ++q) {
        std::span<const double> row(bw.qtve.data() + q * tve_w, tve_w);
        std::size_t c = 0;
        for (std::size_t k = 0; k < v.tve.size(); ++k) {
          logh[q] += s_dot(row.subspan(c, v.tve[k].size()), v.tve[k]);
          c += v.tve[k].size();
        }
      }
    }
    switch (fam) {
      case Baseline::Exponential:
        break;
      case Baseline::Weibull: {
        const S lg = sm_log(v.aux[0]);
        const S gm1 = v.aux[0] - 1.0;
        for (std::size_t q = 0; q < Q; ++q) logh[q] += lg + gm1 * bw.qlogt[q];
        break;
      }
      case Baseline::Gompertz:
        for (std::size_t q = 0; q < Q; ++q)
          logh[q] += v.aux[0] * bw.mesh.nodes[q];
        break;
      case Baseline::MSpline:
        for (std::size_t q = 0; q < Q; ++q) {
          std::span<const double> row(bw.qbase.data() + q * base_w, base_w);
          logh[q] += sm_log(s_dot(row, v.aux));
        }
        break;
      case Baseline::BSpline:
        for (std::size_t q = 0; q < Q; ++q) {
          std::span<const double> row(bw.qbase.data() + q * base_w, base_w);
          logh[q] += s_dot(row, v.aux);
        }
        break;
      default:
        throw std::logic_error("AFT family in hazard path");
    }
    for (std::size_t q = 0; q < Q; ++q) logh[q] = sm_exp(logh[q]);
    return s_dot(std::span<const double>(bw.mesh.weights),
                 std::span<const S>(logh));
  }
}

// eta at a concrete time: eta0 plus the TVE deviations (row holds the
// x-scaled deviation basis at that time).
template <class S>
S eta_with_tve(const LikView<S>& v, std::span<const double> row,
               const S& eta0) {
  S eta = eta0 + 0.0;
  std::size_t c = 0;
  for (std::size_t k = 0; k < v.tve.size(); ++k) {
    eta += s_dot(row.subspan(c, v.tve[k].size()), v.tve[k]);
    c += v.tve[k].size();
  }
  return eta;
}

// log hazard at a concrete time for hazard-scale families; `base_row` holds
// the baseline basis at that time (M-spline row or no-intercept B-spline row).
template <class S>
S log_hazard_core(Baseline fam, const LikView<S>& v,
                  std::span<const double> base_row, double t, double log_t,
                  const S& eta_at_t) {
  switch (fam) {
    case Baseline::Exponential:
      return eta_at_t + 0.0;
    case Baseline::Weibull:
      return sm_log(v.aux[0]) + (v.aux[0] - 1.0) * log_t + eta_at_t;
    case Baseline::Gompertz:
      return v.aux[0] * t + eta_at_t;
    case Baseline::MSpline:
      return sm_log(s_dot(base_row, v.aux)) + eta_at_t;
    case Baseline::BSpline:
      return s_dot(base_row, v.aux) + eta_at_t;
    default:
      throw std::logic_error("AFT family in hazard path");
  }
}

// Cumulative acceleration factor at one bound (AFT families).
template <class S>
S cumulative_acceleration_at(const ModelContext& ctx, const LikView<S>& v,
                             const BoundWork& bw, const S& eta0) {
  if (!ctx.spec.uses_quadrature()) return sm_exp(bw.log_t - eta0);
  const std::size_t Q = bw.mesh.nodes.size();
  const std::size_t tve_w = ctx.tve_row_width();
  if constexpr (std::is_same_v<S, ad::Var>) {
    // One fused node per quadrature node: value exp(-eta(u_q)) with the
    // chain rule folded into the argument weights.
    ad::Tape& tape = ad::active_tape();
    const double eta0v = eta0.val();
    std::vector<ad::Var> aq;
    aq.reserve(Q);
    for (std::size_t q = 0; q < Q; ++q) {
      const double* trow = bw.qtve.data() + q * tve_w;
      double lv = eta0v;
      std::size_t c = 0;
      for (std::size_t k = 0; k < v.tve.size(); ++k)
        for (std::size_t l = 0; l < v.tve[k].size(); ++l, ++c)
          lv += trow[c] * v.tve[k][l].val();
      const double av = std::exp(-lv);
      tape.begin_nary();
      tape.push_arg(eta0.index(), -av);
      c = 0;
      for (std::size_t k = 0; k < v.tve.size(); ++k)
        for (std::size_t l = 0; l < v.tve[k].size(); ++l, ++c)
          tape.push_arg(v.tve[k][l].index(), -av * trow[c]);
      aq.emplace_back(av, tape.end_nary());
    }
    return ad::dot(std::span<const double>(bw.mesh.weights),
                   std::span<const ad::Var>(aq));
  } else {
    std::vector<S> aq;
    aq.reserve(Q);
    for (std::size_t q = 0; q < Q; ++q) {
      S eta = eta0 + 0.0;
      std::span<const double> row(bw.qtve.data() + q * tve_w, tve_w);
      std::size_t c = 0;
      for (std::size_t k = 0; k < v.tve.size(); ++k) {
        eta += s_dot(row.subspan(c, v.tve[k].size()), v.tve[k]);
        c += v.tve[k].size();
      }
      aq.push_back(sm_exp(-eta));
    }
    return s_dot(std::span<const double>(bw.mesh.weights),
                 std::span<const S>(aq));
  }
}

template <class S>
S aft_log_survival_at(const ModelContext& ctx, const LikView<S>& v,
                      const S& accel) {
  if (ctx.spec.baseline == Baseline::ExponentialAft) return -accel;
  return -sm_exp(v.aux[0] * sm_log(accel));
}

}  // namespace detail

// Log likelihood of one record given the likelihood view.
template <class S>
S record_log_lik(const ModelContext& ctx, const LikView<S>& v, std::size_t i) {
  const RecordWork& r = ctx.work[i];
  const S eta0 = detail::eta_const(ctx, v, r);
  if (!baseline_is_aft(ctx.spec.baseline)) {
    const S H_exit = detail::cumulative_hazard(ctx, v, r.exit, eta0);
    const S logS_exit = -H_exit;
    S ll = logS_exit;
    switch (r.status) {
      case CensoringStatus::RightCensored:
        break;
      case CensoringStatus::Event: {
        const S eta_exit = detail::eta_with_tve(v, r.tve_row_exit, eta0);
        ll = detail::log_hazard_core(ctx.spec.baseline, v, r.base_row_exit,
                                     r.t_exit, r.exit.log_t, eta_exit) +
             logS_exit;
        break;
      }
      case CensoringStatus::LeftCensored:
        ll = log1m_exp(logS_exit);
        break;
      case CensoringStatus::IntervalCensored: {
        const S H_up = detail::cumulative_hazard(ctx, v, r.upper, eta0);
        ll = log_interval_mass(logS_exit, -H_up);
        break;
      }
    }
    if (r.t_entry > 0) ll += detail::cumulative_hazard(ctx, v, r.entry, eta0);
    return ll;
  }
  // AFT scale
  const bool weib = ctx.spec.baseline == Baseline::WeibullAft;
  const S a_exit = detail::cumulative_acceleration_at(ctx, v, r.exit, eta0);
  const S logS_exit = detail::aft_log_survival_at(ctx, v, a_exit);
  S ll = logS_exit;
  switch (r.status) {
    case CensoringStatus::RightCensored:
      break;
    case CensoringStatus::Event: {
      const S eta_exit = detail::eta_with_tve(v, r.tve_row_exit, eta0);
      S log_h = -eta_exit;
      if (weib) log_h += sm_log(v.aux[0]) + (v.aux[0] - 1.0) * sm_log(a_exit);
      ll = log_h + logS_exit;
      break;
    }
    case CensoringStatus::LeftCensored:
      ll = log1m_exp(logS_exit);
      break;
    case CensoringStatus::IntervalCensored: {
      const S a_up = detail::cumulative_acceleration_at(ctx, v, r.upper, eta0);
      ll = log_interval_mass(logS_exit, detail::aft_log_survival_at(ctx, v, a_up));
      break;
    }
  }
  if (r.t_entry > 0) {
    const S a_entry = detail::cumulative_acceleration_at(ctx, v, r.entry, eta0);
    ll -= detail::aft_log_survival_at(ctx, v, a_entry);
  }
  return ll;
}

// Public spec-level helper: likelihood of a single record under natural-scale
// coefficients (used by tests and by the pointwise log-likelihood matrix).
inline double log_likelihood_record(const ModelContext& ctx,
                                    const LikView<double>& v, std::size_t i) {
  const double ll = record_log_lik<double>(ctx, v, i);
  if (std::isnan(ll)) throw NonFiniteLogLik(i);
  return ll;
}

// --- priors and posterior ----------------------------------------------------

template <class S>
S log_priors(const ModelContext& ctx, const Params<S>& p) {
  const PriorSet& pr = ctx.spec.priors;
  S lp = log_prior_density(pr.intercept, p.intercept_c - ctx.intercept_shift);
  for (const S& b : p.beta) lp += log_prior_density(pr.coef, b);
  for (std::size_t k = 0; k < p.tve_dev.size(); ++k) {
    lp += log_prior_random_walk(std::span<const S>(p.tve_dev[k]),
                                p.smooth_sd[k]);
    lp += log_prior_density(pr.smooth, p.smooth_sd[k]);
  }
  switch (ctx.spec.baseline) {
    case Baseline::Weibull:
    case Baseline::Gompertz:
    case Baseline::WeibullAft:
      lp += log_prior_density(pr.aux, p.aux[0]);
      break;
    case Baseline::MSpline: {
      std::vector<double> conc(p.aux.size(), pr.mspline_concentration);
      lp += dirichlet_lpdf(std::span<const S>(p.aux), conc);
      break;
    }
    case Baseline::BSpline:
      for (const S& g : p.aux) lp += log_prior_density(pr.bspline_coef, g);
      break;
    default:
      break;
  }
  for (std::size_t f = 0; f < p.re.size(); ++f) {
    const auto& re = p.re[f];
    const std::size_t n = re.z.size();
    lp += -0.5 * s_dot_sv(std::span<const S>(re.z), std::span<const S>(re.z)) -
          0.5 * static_cast<double>(n) * log_two_pi;
    lp += gamma_lpdf(re.tau, pr.covariance.gamma_shape, pr.covariance.gamma_scale);
    const std::size_t dim = ctx.layout.re[f].dim;
    if (dim > 1) {
      std::vector<double> conc(dim, pr.covariance.simplex_concentration);
      lp += dirichlet_lpdf(std::span<const S>(re.pi), conc);
      lp += lkj_corr_lpdf(std::span<const S>(re.Lcorr), dim,
                          pr.covariance.lkj_regularisation);
    }
  }
  return lp;
}

template <class S>
S log_posterior_eval(const ModelContext& ctx, std::span<const S> y) {
  Params<S> p = constrain(ctx, y);
  S lp = p.log_jac + log_priors(ctx, p);
  if (!ctx.spec.prior_only) {
    const LikView<S> v = lik_view(p);
    for (std::size_t i = 0; i < ctx.work.size(); ++i)
      lp += record_log_lik(ctx, v, i);
  }
  return lp;
}

inline double log_posterior(const ModelContext& ctx,
                            std::span<const double> y) {
  const double lp = log_posterior_eval<double>(ctx, y);
  return std::isfinite(lp) ? lp : -std::numeric_limits<double>::infinity();
}

// Log-posterior target with reverse-mode gradients, as consumed by the
// sampler and the optimizer.  One instance per thread.
class PosteriorTarget {
 public:
  explicit PosteriorTarget(const ModelContext& ctx) : ctx_(&ctx) {}

  std::size_t dim() const { return ctx_->layout.n_unc; }

  double logp(std::span<const double> y) const { return log_posterior(*ctx_, y); }

  double logp_grad(std::span<const double> y, std::span<double> grad) const {
    ad::TapeScope scope(tape_);
    tape_.clear();
    vy_.clear();
    for (double v : y) vy_.emplace_back(v);
    const ad::Var lp = log_posterior_eval<ad::Var>(*ctx_, vy_);
    if (!std::isfinite(lp.val())) {
      for (auto& g : grad) g = 0;
      return -std::numeric_limits<double>::infinity();
    }
    tape_.gradient(lp.index(), grad);
    return lp.val();
  }

  const ModelContext& context() const { return *ctx_; }

 private:
  const ModelContext* ctx_;
  mutable ad::Tape tape_;
  mutable std::vector<ad::Var> vy_;
};

}  // namespace survmc
