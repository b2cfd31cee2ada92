#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "survmc/bundle.hpp"
#include "survmc/formula.hpp"
#include "survmc/model_eval.hpp"
#include "survmc/predict.hpp"
#include "survmc/simulate.hpp"

// Command-line front end: fit / predict / check / compare / simulate.
// Exit codes: 0 success, 1 model or runtime error, 2 usage or I/O error.

namespace survmc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t used = 0;
    out.push_back(std::stod(s.substr(pos), &used));
    pos += used;
    if (pos < s.size() && s[pos] == ',') ++pos;
  }
  return out;
}

inline std::string display_name(Baseline b) {
  switch (b) {
    case Baseline::Exponential: return "exponential";
    case Baseline::Weibull: return "Weibull";
    case Baseline::Gompertz: return "Gompertz";
    case Baseline::MSpline: return "M-splines on hazard scale";
    case Baseline::BSpline: return "B-splines on log hazard scale";
    case Baseline::ExponentialAft: return "exponential (AFT scale)";
    case Baseline::WeibullAft: return "Weibull (AFT scale)";
  }
  return "?";
}

// ---- fit -------------------------------------------------------------------

struct FitOptions {
  std::string data_path, formula_text, out_dir, config_path;
  std::string basehaz = "ms";
  int basehaz_degree = 3;
  std::string basehaz_knots;  // comma list
  int basehaz_df = -1;
  int qnodes = 15;
  int chains = 4, iters = 1000, warmup = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.95;
  int max_treedepth = 10;
  bool prior_only = false;
  int threads = 0;
};

inline void apply_config_defaults(FitOptions& o, const CLI::App& app) {
  if (o.config_path.empty()) return;
  std::ifstream in(o.config_path);
  if (!in) throw UsageError("cannot open config file " + o.config_path);
  json cfg;
  in >> cfg;
  auto maybe = [&](const char* flag, auto& slot) {
    using T = std::decay_t<decltype(slot)>;
    const std::string key = std::string(flag).substr(2);
    if (app.count(flag) == 0 && cfg.contains(key)) slot = cfg.at(key).get<T>();
  };
  maybe("--data", o.data_path);
  maybe("--formula", o.formula_text);
  maybe("--basehaz", o.basehaz);
  maybe("--basehaz-degree", o.basehaz_degree);
  maybe("--basehaz-knots", o.basehaz_knots);
  maybe("--basehaz-df", o.basehaz_df);
  maybe("--qnodes", o.qnodes);
  maybe("--chains", o.chains);
  maybe("--iters", o.iters);
  maybe("--warmup", o.warmup);
  maybe("--seed", o.seed);
  maybe("--target-accept", o.target_accept);
  maybe("--max-treedepth", o.max_treedepth);
  maybe("--prior-only", o.prior_only);
  maybe("--threads", o.threads);
  maybe("--out", o.out_dir);
}

inline ScalarPrior prior_from_config(const json& j) {
  return bundle_detail::prior_from_json(j);
}

inline void apply_prior_config(PriorSet& priors, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  json cfg;
  in >> cfg;
  if (!cfg.contains("priors")) return;
  const auto& pj = cfg["priors"];
  if (pj.contains("intercept")) priors.intercept = prior_from_config(pj["intercept"]);
  if (pj.contains("coef")) priors.coef = prior_from_config(pj["coef"]);
  if (pj.contains("aux")) priors.aux = prior_from_config(pj["aux"]);
  if (pj.contains("bspline_coef"))
    priors.bspline_coef = prior_from_config(pj["bspline_coef"]);
  if (pj.contains("smooth")) priors.smooth = prior_from_config(pj["smooth"]);
  if (pj.contains("mspline_concentration"))
    priors.mspline_concentration = pj["mspline_concentration"].get<double>();
  if (pj.contains("covariance")) {
    const auto& cj = pj["covariance"];
    auto& cov = priors.covariance;
    if (cj.contains("lkj_regularisation"))
      cov.lkj_regularisation = cj["lkj_regularisation"].get<double>();
    if (cj.contains("simplex_concentration"))
      cov.simplex_concentration = cj["simplex_concentration"].get<double>();
    if (cj.contains("gamma_shape")) cov.gamma_shape = cj["gamma_shape"].get<double>();
    if (cj.contains("gamma_scale")) cov.gamma_scale = cj["gamma_scale"].get<double>();
  }
}

inline Baseline parse_basehaz(const std::string& s) {
  for (Baseline b : {Baseline::Exponential, Baseline::Weibull,
                     Baseline::Gompertz, Baseline::MSpline, Baseline::BSpline,
                     Baseline::ExponentialAft, Baseline::WeibullAft})
    if (s == baseline_name(b)) return b;
  throw UsageError("unknown basehaz '" + s +
                   "' (use exp, weibull, gompertz, ms, bs, exp-aft, weibull-aft)");
}

// Times used for default knot placement.
struct KnotInputs {
  std::vector<double> uncensored, entries, all;
};

inline KnotInputs knot_inputs(const Dataset& ds) {
  KnotInputs k;
  for (const auto& r : ds.records) {
    if (r.status == CensoringStatus::Event) k.uncensored.push_back(r.time);
    k.entries.push_back(r.entry_time);
    k.all.push_back(r.time);
    if (r.upper_time) k.all.push_back(*r.upper_time);
  }
  return k;
}

inline SplineConfig resolve_baseline_spline(const FitOptions& o, Baseline fam,
                                            const Dataset& ds) {
  if (!o.basehaz_knots.empty() && o.basehaz_df >= 0)
    throw UsageError("supply either --basehaz-knots or --basehaz-df, not both");
  const auto ki = knot_inputs(ds);
  int n_internal = 2;  // default: two internal knots
  if (o.basehaz_df >= 0) {
    // df counts the baseline basis terms: internal + degree + 1 for ms,
    // internal + degree for the no-intercept bs basis
    n_internal = fam == Baseline::MSpline ? o.basehaz_df - o.basehaz_degree - 1
                                          : o.basehaz_df - o.basehaz_degree;
    if (n_internal < 0) throw UsageError("--basehaz-df too small for the degree");
  }
  SplineConfig cfg;
  cfg.degree = o.basehaz_degree;
  cfg.basis_kind = fam == Baseline::MSpline ? BasisKind::MSpline : BasisKind::BSpline;
  if (!o.basehaz_knots.empty()) {
    auto internal = parse_double_list(o.basehaz_knots);
    cfg.knots = default_knots(ki.uncensored, 0, ki.entries, ki.all);
    cfg.knots.internal = internal;
    cfg.knots.validate();
  } else {
    cfg.knots = default_knots(ki.uncensored, n_internal, ki.entries, ki.all);
  }
  return cfg;
}

inline TveSpec resolve_tve(const FormulaTve& f, std::size_t cov_index,
                           const Dataset& ds) {
  if (!f.knots.empty() && f.df)
    throw UsageError("tve(" + f.covariate +
                     "): supply either knots or df, not both");
  TveSpec t;
  t.covariate_index = cov_index;
  const int degree = f.degree.value_or(3);
  t.form = degree == 0 ? TveForm::PiecewiseConstant : TveForm::BsplineSmooth;
  const auto ki = knot_inputs(ds);
  t.spline.degree = degree;
  t.spline.basis_kind = BasisKind::BSpline;
  if (!f.knots.empty()) {
    t.spline.knots = default_knots(ki.uncensored, 0, ki.entries, ki.all);
    t.spline.knots.internal = f.knots;
    t.spline.knots.validate();
  } else {
    // deviation terms M = internal + degree; default df = 3 for cubic
    int n_internal = 0;
    if (f.df) n_internal = *f.df - degree;
    if (n_internal < 0)
      throw UsageError("tve(" + f.covariate + "): df too small for the degree");
    if (degree == 0 && n_internal == 0)
      throw UsageError("tve(" + f.covariate +
                       ", degree=0) needs at least one knot");
    t.spline.knots = default_knots(ki.uncensored, n_internal, ki.entries, ki.all);
  }
  t.validate();
  return t;
}

inline ModelSpec build_spec(const FitOptions& o, const FormulaAst& ast,
                            const Dataset& ds) {
  ModelSpec spec;
  spec.baseline = parse_basehaz(o.basehaz);
  spec.covariate_names = ds.covariate_names;
  if (baseline_has_spline(spec.baseline))
    spec.baseline_spline = resolve_baseline_spline(o, spec.baseline, ds);
  for (const auto& f : ast.tve) {
    auto it = std::find(ds.covariate_names.begin(), ds.covariate_names.end(),
                        f.covariate);
    spec.tve.push_back(resolve_tve(
        f, static_cast<std::size_t>(it - ds.covariate_names.begin()), ds));
  }
  for (const auto& r : ast.re) {
    ReTerm term;
    term.factor = r.factor;
    if (!r.slope.empty()) {
      auto it = std::find(ds.covariate_names.begin(), ds.covariate_names.end(),
                          r.slope);
      term.slope_covariate =
          static_cast<std::size_t>(it - ds.covariate_names.begin());
    }
    spec.re.push_back(term);
  }
  spec.qnodes = o.qnodes;
  spec.prior_only = o.prior_only;
  apply_prior_config(spec.priors, o.config_path);
  return spec;
}

inline void print_fit_summary(std::ostream& os, const ModelContext& ctx,
                              const FitResult& fit, const std::string& formula) {
  const auto counts = ctx.data.counts();
  const auto pct = [&](std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f",
                  100.0 * k / std::max<std::size_t>(1, counts.total()));
    return std::string(buf);
  };
  os << "survmc fit\n";
  os << " baseline hazard: " << display_name(ctx.spec.baseline) << "\n";
  os << " formula:         " << formula << "\n";
  os << " observations:    " << counts.total() << "\n";
  os << " events:          " << counts.events << " (" << pct(counts.events)
     << "%)\n";
  os << " right censored:  " << counts.right << " (" << pct(counts.right)
     << "%)\n";
  if (counts.left > 0)
    os << " left censored:   " << counts.left << " (" << pct(counts.left)
       << "%)\n";
  if (counts.interval > 0)
    os << " interval cens.:  " << counts.interval << " (" << pct(counts.interval)
       << "%)\n";
  os << " delayed entry:   " << (ctx.data.has_delayed_entry() ? "yes" : "no")
     << "\n";
  os << "------\n";

  const auto& d = fit.draws;
  const auto& rl = d.cols;
  // exponentiable rows: regression coefficients and TVE deviations
  auto is_exp_row = [&](std::size_t c) {
    if (c >= rl.beta && c < rl.beta + ctx.spec.covariate_names.size()) return true;
    for (std::size_t k = 0; k < rl.tve.size(); ++k)
      if (c >= rl.tve[k] && c < rl.tve[k] + ctx.spec.tve[k].n_deviation())
        return true;
    return false;
  };
  // rows shown in the main block: everything up to the random effects
  std::size_t last = rl.re.empty() ? rl.lp : rl.re[0].sd;
  std::size_t width = 12;
  for (std::size_t c = 0; c < last; ++c)
    width = std::max(width, d.names[c].size());
  os << std::string(width, ' ') << "  Median MAD_SD exp(Median)\n";
  char buf[160];
  for (std::size_t c = 0; c < last; ++c) {
    auto vals = d.column_values(c);
    const double med = median_of(vals);
    const double mad = mad_sd_of(vals);
    if (is_exp_row(c))
      std::snprintf(buf, sizeof buf, "%-*s %7.2f %6.2f %7.2f\n",
                    static_cast<int>(width), d.names[c].c_str(), med, mad,
                    std::exp(med));
    else
      std::snprintf(buf, sizeof buf, "%-*s %7.2f %6.2f %7s\n",
                    static_cast<int>(width), d.names[c].c_str(), med, mad, "NA");
    os << buf;
  }
  if (!ctx.spec.re.empty()) {
    os << "\nError terms:\n Groups Name        Std.Dev. Corr\n";
    for (std::size_t f = 0; f < ctx.spec.re.size(); ++f) {
      const std::size_t dim = ctx.layout.re[f].dim;
      for (std::size_t dd = 0; dd < dim; ++dd) {
        const double sd = median_of(d.column_values(rl.re[f].sd + dd));
        std::string corr;
        if (dd == 1) {
          char cb[16];
          std::snprintf(cb, sizeof cb, "%.2f",
                        median_of(d.column_values(rl.re[f].corr)));
          corr = cb;
        }
        std::snprintf(buf, sizeof buf, " %-6s %-11s %-8.3f %s\n",
                      dd == 0 ? ctx.spec.re[f].factor.c_str() : "",
                      re_term_name(ctx, f, dd).c_str(), sd, corr.c_str());
        os << buf;
      }
      os << "Num. levels: " << ctx.spec.re[f].factor << " "
         << ctx.re_levels[f] << "\n";
    }
  }
  std::size_t div = 0;
  for (auto v : d.stats.divergent) div += v;
  os << "------\n";
  os << "chains: " << fit.config.chains << "  iters: " << fit.config.iters
     << "+" << fit.config.warmup << " warmup  divergent: " << div << "\n";
}

inline int cmd_fit(const FitOptions& opts_in, const CLI::App& app) {
  FitOptions o = opts_in;
  apply_config_defaults(o, app);
  if (o.data_path.empty() || o.formula_text.empty() || o.out_dir.empty())
    throw UsageError("fit requires --data, --formula, and --out");
  const FormulaAst ast = parse_formula(o.formula_text);
  DataSchema schema;
  schema.entry = ast.entry;
  schema.time = ast.time;
  schema.upper = ast.upper;
  schema.status = ast.status;
  schema.covariates = ast.all_covariates();
  for (const auto& r : ast.re) schema.factors.push_back(r.factor);
  Dataset ds = load_dataset(o.data_path, schema);

  ModelSpec spec = build_spec(o, ast, ds);
  ModelContext ctx = build_context(std::move(spec), std::move(ds));
  NutsConfig cfg;
  cfg.chains = o.chains;
  cfg.warmup = o.warmup;
  cfg.iters = o.iters;
  cfg.seed = o.seed;
  cfg.target_accept = o.target_accept;
  cfg.max_treedepth = o.max_treedepth;
  cfg.threads = o.threads;
  FitResult fit = fit_model(ctx, cfg);
  write_bundle(o.out_dir, ctx, fit, o.formula_text);
  print_fit_summary(std::cout, ctx, fit, o.formula_text);
  return 0;
}

// ---- predict / check -------------------------------------------------------

struct PredictOptions {
  std::string fit_dir, newdata, out_path;
  std::string quantity = "surv";
  std::string times;  // comma list
  bool extrapolate = false;
  double edist = -1;
  int grid = 100;
  double condition_time = -1;
  bool standardise = false;
  double level = 0.95;
};

inline std::vector<NewDataRow> load_newdata(const std::string& path,
                                            const ModelContext& ctx,
                                            const std::vector<std::string>& factors) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> c_cov;
  for (const auto& n : ctx.spec.covariate_names) c_cov.push_back(t.column_index(n));
  std::vector<std::optional<std::size_t>> c_fac;
  for (const auto& f : factors) {
    std::optional<std::size_t> idx;
    if (std::find(t.columns.begin(), t.columns.end(), f) != t.columns.end())
      idx = t.column_index(f);
    c_fac.push_back(idx);
  }
  std::vector<NewDataRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    NewDataRow r;
    for (std::size_t c : c_cov)
      r.covariates.push_back(parse_double(t.rows[i][c], i + 1));
    for (std::size_t k = 0; k < factors.size(); ++k)
      if (c_fac[k]) r.cluster_labels[factors[k]] = t.rows[i][*c_fac[k]];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_frame(const PredictionFrame& frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "id,cond_time,time,median,ci_lb,ci_ub\n";
  char buf[200];
  for (const auto& r : frame.rows) {
    std::string ct = r.cond_time ? std::to_string(*r.cond_time) : "NA";
    std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f,%.6f,%.6f\n", r.id,
                  ct.c_str(), r.time, r.median, r.ci_lb, r.ci_ub);
    out << buf;
  }
}

inline int cmd_predict(const PredictOptions& o) {
  if (o.fit_dir.empty() || o.out_path.empty())
    throw UsageError("predict requires --fit and --out");
  FitBundle b = read_bundle(o.fit_dir);
  ModelContext ctx = context_from_bundle(b);
  attach_report_layout(ctx, b.draws);

  std::vector<std::string> factors;
  for (const auto& r : ctx.spec.re) factors.push_back(r.factor);

  PredictionRequest req;
  req.quantity = parse_quantity(o.quantity);
  req.credible_level = o.level;
  req.standardise = o.standardise;
  if (!o.newdata.empty()) {
    req.rows = load_newdata(o.newdata, ctx, factors);
  } else {
    for (const auto& rec : ctx.data.records) {
      NewDataRow row;
      row.covariates = rec.covariates;
      row.cluster_labels = rec.cluster_labels;
      req.rows.push_back(std::move(row));
    }
  }

  std::vector<double> times =
      o.times.empty() ? std::vector<double>{0.0} : parse_double_list(o.times);
  // A single starting time extrapolates forward over a grid (the default
  // request); an explicit list of times is used as-is.
  if (o.extrapolate || o.times.empty()) {
    const double start = times.empty() ? 0.0 : times[0];
    double stop = ctx.t_max;
    if (o.edist > 0) stop = std::min(ctx.t_max, start + o.edist);
    req.times.clear();
    const int g = std::max(2, o.grid);
    for (int i = 0; i < g; ++i)
      req.times.push_back(start + (stop - start) * i / (g - 1));
  } else {
    req.times = times;
  }

  PredictionFrame frame;
  if (o.condition_time > 0) {
    req.condition_time = o.condition_time;
    std::erase_if(req.times, [&](double t) { return t < o.condition_time; });
    frame = conditional_survival(ctx, b.draws, req);
  } else if (o.standardise) {
    frame = standardised_survival(ctx, b.draws, req);
  } else {
    frame = predict_curves(ctx, b.draws, req);
  }
  write_frame(frame, o.out_path);
  std::cout << "survmc predictions\n"
            << " num. individuals: " << req.rows.size() << "\n"
            << " prediction type:  "
            << (req.quantity == PredQuantity::Surv ? "event free probability"
                                                   : o.quantity)
            << "\n"
            << " standardised?:    " << (o.standardise ? "yes" : "no") << "\n"
            << " conditional?:     " << (o.condition_time > 0 ? "yes" : "no")
            << "\n"
            << " rows written:     " << frame.rows.size() << " -> " << o.out_path
            << "\n";
  return 0;
}

inline int cmd_check(const std::string& fit_dir, int grid,
                     const std::string& out_path) {
  if (fit_dir.empty() || out_path.empty())
    throw UsageError("check requires --fit and --out");
  FitBundle b = read_bundle(fit_dir);
  ModelContext ctx = context_from_bundle(b);
  attach_report_layout(ctx, b.draws);
  auto res = ps_check(ctx, b.draws, grid);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "time,km,pred_median,pred_lb,pred_ub\n";
  for (std::size_t i = 0; i < res.times.size(); ++i)
    out << res.times[i] << "," << res.km[i] << "," << res.pred_median[i] << ","
        << res.pred_lb[i] << "," << res.pred_ub[i] << "\n";
  std::printf("ps_check: max |KM - predictive median| = %.4f over %zu points\n",
              res.max_abs_discrepancy, res.times.size());
  return 0;
}

// ---- compare ----------------------------------------------------------------

inline int cmd_compare(const std::vector<std::string>& fit_dirs,
                       const std::string& group_file) {
  if (fit_dirs.size() < 2) throw UsageError("compare needs at least two --fits");
  std::vector<std::string> group_ids;
  if (!group_file.empty()) {
    std::ifstream in(group_file);
    if (!in) throw UsageError("cannot open " + group_file);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) group_ids.push_back(line);
  }
  std::vector<WaicResult> results;
  for (const auto& dir : fit_dirs) {
    FitBundle b = read_bundle(dir);
    ModelContext ctx = context_from_bundle(b);
    attach_report_layout(ctx, b.draws);
    auto ll = log_lik_matrix(ctx, b.draws, group_ids);
    auto w = waic(ll);
    w.label = fs::path(dir).filename().string();
    results.push_back(std::move(w));
  }
  auto rows = compare(results);
  std::printf("%-24s %10s %8s\n", "", "elpd_diff", "se_diff");
  for (const auto& r : rows)
    std::printf("%-24s %10.1f %8.1f\n", r.label.c_str(), r.elpd_diff, r.se_diff);
  return 0;
}

// ---- simulate ----------------------------------------------------------------

inline int cmd_simulate(const std::string& design_path, std::uint64_t seed,
                        const std::string& out_path) {
  if (design_path.empty() || out_path.empty())
    throw UsageError("simulate requires --design and --out");
  std::ifstream in(design_path);
  if (!in) throw UsageError("cannot open design file " + design_path);
  json j;
  in >> j;

  SimDesign d;
  const std::string dist = j.value("dist", "weibull");
  if (dist == "exponential") d.dist = SimBaseline::Exponential;
  else if (dist == "weibull") d.dist = SimBaseline::Weibull;
  else if (dist == "gompertz") d.dist = SimBaseline::Gompertz;
  else throw UsageError("unknown simulation dist: " + dist);
  d.lambda = j.value("lambda", 1.0);
  d.gamma = j.value("gamma", 1.0);
  d.max_time = j.value("max_time", 1.0);
  if (j.contains("betas"))
    for (auto it = j["betas"].begin(); it != j["betas"].end(); ++it)
      d.betas[it.key()] = it.value().get<double>();
  if (j.contains("tde")) {
    for (auto it = j["tde"].begin(); it != j["tde"].end(); ++it)
      d.tde[it.key()] = it.value().get<double>();
    const std::string fn = j.value("tde_fn", "linear");
    if (fn == "linear") d.tde_fn = TdeForm::Linear;
    else if (fn == "step") d.tde_fn = TdeForm::Step;
    else throw UsageError("tde_fn must be linear or step");
    d.tde_threshold = j.value("tde_threshold", 0.0);
  }

  const std::size_t n = j.value("n", 100);
  CovariateTable covs;
  if (j.contains("covariates")) {
    for (const auto& cj : j["covariates"]) {
      const std::string name = cj.at("name");
      covs.names.push_back(name);
    }
    // bernoulli generators, one per covariate
    std::size_t idx = 0;
    covs.rows.assign(n, std::vector<double>(covs.names.size(), 0.0));
    for (const auto& cj : j["covariates"]) {
      const double p = cj.value("p", 0.5);
      CounterRng rng(seed ^ (0x636f760000ULL + idx), 7777);
      for (std::size_t i = 0; i < n; ++i)
        covs.rows[i][idx] = rng.uniform() < p ? 1.0 : 0.0;
      ++idx;
    }
  } else {
    covs.rows.assign(n, {});
  }

  Dataset ds;
  if (j.contains("frailty")) {
    SimDesign::Frailty fr;
    const auto& fj = j["frailty"];
    fr.factor = fj.value("factor", "site");
    fr.sd = fj.value("sd", 1.0);
    fr.n_clusters = fj.at("n_clusters").get<std::size_t>();
    fr.n_per_cluster = fj.at("n_per_cluster").get<std::size_t>();
    d.frailty = fr;
    if (covs.rows.size() != fr.n_clusters * fr.n_per_cluster)
      throw UsageError("n must equal n_clusters * n_per_cluster");
    ds = simulate_frailty(d, covs, seed);
  } else {
    ds = simulate(d, covs, seed);
  }
  write_data_csv(ds, out_path);
  const auto counts = ds.counts();
  std::printf("simulated %zu records -> %s (events: %zu, censored: %zu)\n",
              ds.records.size(), out_path.c_str(), counts.events, counts.right);
  return 0;
}

// ---- entry point --------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"Bayesian parametric survival modelling"};
  app.require_subcommand(1);

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "fit a survival model");
  fit->add_option("--data", fo.data_path, "CSV data file");
  fit->add_option("--formula", fo.formula_text, "model formula");
  fit->add_option("--out", fo.out_dir, "output bundle directory");
  fit->add_option("--config", fo.config_path, "JSON config file");
  fit->add_option("--basehaz", fo.basehaz,
                  "exp|weibull|gompertz|ms|bs|exp-aft|weibull-aft");
  fit->add_option("--basehaz-degree", fo.basehaz_degree, "spline degree");
  fit->add_option("--basehaz-knots", fo.basehaz_knots, "internal knots (comma list)");
  fit->add_option("--basehaz-df", fo.basehaz_df, "baseline basis terms");
  fit->add_option("--qnodes", fo.qnodes, "quadrature nodes (7, 11, 15)");
  fit->add_option("--chains", fo.chains);
  fit->add_option("--iters", fo.iters);
  fit->add_option("--warmup", fo.warmup);
  fit->add_option("--seed", fo.seed);
  fit->add_option("--target-accept", fo.target_accept);
  fit->add_option("--max-treedepth", fo.max_treedepth);
  fit->add_flag("--prior-only", fo.prior_only, "draw from the prior predictive");
  fit->add_option("--threads", fo.threads);

  PredictOptions po;
  auto* predict = app.add_subcommand("predict", "posterior predictive curves");
  predict->add_option("--fit", po.fit_dir, "fit bundle directory");
  predict->add_option("--newdata", po.newdata, "covariate CSV");
  predict->add_option("--out", po.out_path, "output CSV");
  predict->add_option("--quantity", po.quantity,
                      "surv|cumhaz|haz|cdf|logsurv|logcumhaz|loghaz|logcdf");
  predict->add_option("--times", po.times, "evaluation times (comma list)");
  predict->add_flag("--extrapolate", po.extrapolate);
  predict->add_option("--edist", po.edist, "extrapolation distance");
  predict->add_option("--grid", po.grid, "grid size for extrapolation");
  predict->add_option("--condition-time", po.condition_time);
  predict->add_flag("--standardise", po.standardise);
  predict->add_option("--level", po.level, "credible level");

  std::string check_fit, check_out;
  int check_grid = 20;
  auto* check = app.add_subcommand("check", "posterior predictive check vs KM");
  check->add_option("--fit", check_fit);
  check->add_option("--grid", check_grid);
  check->add_option("--out", check_out);

  std::vector<std::string> cmp_fits;
  std::string cmp_groups;
  auto* cmp = app.add_subcommand("compare", "WAIC model comparison");
  cmp->add_option("--fits", cmp_fits, "fit bundle directories")->expected(-1);
  cmp->add_option("--group-by-file", cmp_groups,
                  "file with one unit id per data row");

  std::string sim_design, sim_out;
  std::uint64_t sim_seed = 1;
  auto* sim = app.add_subcommand("simulate", "simulate survival data");
  sim->add_option("--design", sim_design, "JSON design file");
  sim->add_option("--seed", sim_seed);
  sim->add_option("--out", sim_out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(fo, *fit);
    if (*predict) return cmd_predict(po);
    if (*check) return cmd_check(check_fit, check_grid, check_out);
    if (*cmp) return cmd_compare(cmp_fits, cmp_groups);
    if (*sim) return cmd_simulate(sim_design, sim_seed, sim_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingColumn& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SyntaxError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace survmc::cli
