#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "survmc/diagnostics.hpp"
#include "survmc/fit.hpp"
#include "survmc/formula.hpp"
#include "survmc/model.hpp"

// Fit bundle: a directory holding everything needed to reproduce
// post-estimation output --
//   spec.json        model configuration, knots actually used, formula
//   data.csv         the estimation data (normalised schema)
//   draws.csv        named constrained draws, one column per parameter
//   diagnostics.json sampler diagnostics and per-parameter Rhat/ESS
// Writes go to a temporary sibling directory followed by an atomic rename,
// so a crashed run never leaves a partial bundle behind.

namespace survmc {

class BundleVersionMismatch : public std::runtime_error {
 public:
  explicit BundleVersionMismatch(int got)
      : std::runtime_error("fit bundle version " + std::to_string(got) +
                           " is not supported") {}
};

inline constexpr int bundle_version = 1;

namespace bundle_detail {

using nlohmann::json;

inline json prior_to_json(const ScalarPrior& p) {
  json j;
  switch (p.family) {
    case PriorFamily::Normal: j["family"] = "normal"; break;
    case PriorFamily::StudentT: j["family"] = "t"; break;
    case PriorFamily::Cauchy: j["family"] = "cauchy"; break;
    case PriorFamily::Exponential: j["family"] = "exponential"; break;
    case PriorFamily::HalfNormal: j["family"] = "half-normal"; break;
    case PriorFamily::HalfT: j["family"] = "half-t"; break;
    case PriorFamily::HalfCauchy: j["family"] = "half-cauchy"; break;
    case PriorFamily::Flat: j["family"] = "flat"; break;
  }
  j["location"] = p.location;
  j["scale"] = p.scale;
  if (p.df) j["df"] = *p.df;
  return j;
}

inline ScalarPrior prior_from_json(const json& j) {
  ScalarPrior p;
  const std::string fam = j.at("family");
  if (fam == "normal") p.family = PriorFamily::Normal;
  else if (fam == "t") p.family = PriorFamily::StudentT;
  else if (fam == "cauchy") p.family = PriorFamily::Cauchy;
  else if (fam == "exponential") p.family = PriorFamily::Exponential;
  else if (fam == "half-normal") p.family = PriorFamily::HalfNormal;
  else if (fam == "half-t") p.family = PriorFamily::HalfT;
  else if (fam == "half-cauchy") p.family = PriorFamily::HalfCauchy;
  else if (fam == "flat") p.family = PriorFamily::Flat;
  else throw std::invalid_argument("unknown prior family: " + fam);
  p.location = j.value("location", 0.0);
  p.scale = j.value("scale", 1.0);
  if (j.contains("df")) p.df = j.at("df").get<double>();
  return p;
}

inline json spline_to_json(const SplineConfig& cfg) {
  json j;
  j["degree"] = cfg.degree;
  j["lower"] = cfg.knots.lower_boundary;
  j["internal"] = cfg.knots.internal;
  j["upper"] = cfg.knots.upper_boundary;
  return j;
}

inline SplineConfig spline_from_json(const json& j, BasisKind kind) {
  SplineConfig cfg;
  cfg.degree = j.at("degree");
  cfg.knots.lower_boundary = j.at("lower");
  cfg.knots.internal = j.at("internal").get<std::vector<double>>();
  cfg.knots.upper_boundary = j.at("upper");
  cfg.basis_kind = kind;
  return cfg;
}

inline Baseline baseline_from_name(const std::string& n) {
  for (Baseline b : {Baseline::Exponential, Baseline::Weibull,
                     Baseline::Gompertz, Baseline::MSpline, Baseline::BSpline,
                     Baseline::ExponentialAft, Baseline::WeibullAft})
    if (n == baseline_name(b)) return b;
  throw std::invalid_argument("unknown baseline: " + n);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace bundle_detail

inline nlohmann::json spec_to_json(const ModelSpec& spec,
                                   const std::string& formula_text = "") {
  using bundle_detail::prior_to_json;
  using bundle_detail::spline_to_json;
  nlohmann::json j;
  j["version"] = bundle_version;
  j["basehaz"] = baseline_name(spec.baseline);
  if (spec.baseline_spline) j["basehaz_spline"] = spline_to_json(*spec.baseline_spline);
  j["covariates"] = spec.covariate_names;
  j["formula"] = formula_text;
  j["qnodes"] = spec.qnodes;
  j["prior_only"] = spec.prior_only;
  j["mesh"] = {{"refine", spec.mesh.refine},
               {"grade_panels", spec.mesh.grade_panels},
               {"grade_ratio", spec.mesh.grade_ratio}};
  nlohmann::json tves = nlohmann::json::array();
  for (const auto& t : spec.tve) {
    nlohmann::json tj;
    tj["covariate"] = spec.covariate_names[t.covariate_index];
    tj["piecewise"] = t.form == TveForm::PiecewiseConstant;
    tj["spline"] = spline_to_json(t.spline);
    tves.push_back(tj);
  }
  j["tve"] = tves;
  nlohmann::json res = nlohmann::json::array();
  for (const auto& r : spec.re) {
    nlohmann::json rj;
    rj["factor"] = r.factor;
    if (r.slope_covariate)
      rj["slope"] = spec.covariate_names[*r.slope_covariate];
    res.push_back(rj);
  }
  j["re"] = res;
  j["priors"] = {{"intercept", prior_to_json(spec.priors.intercept)},
                 {"coef", prior_to_json(spec.priors.coef)},
                 {"aux", prior_to_json(spec.priors.aux)},
                 {"bspline_coef", prior_to_json(spec.priors.bspline_coef)},
                 {"smooth", prior_to_json(spec.priors.smooth)},
                 {"mspline_concentration", spec.priors.mspline_concentration},
                 {"covariance",
                  {{"lkj_regularisation", spec.priors.covariance.lkj_regularisation},
                   {"simplex_concentration", spec.priors.covariance.simplex_concentration},
                   {"gamma_shape", spec.priors.covariance.gamma_shape},
                   {"gamma_scale", spec.priors.covariance.gamma_scale}}}};
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  using bundle_detail::prior_from_json;
  using bundle_detail::spline_from_json;
  if (j.value("version", -1) != bundle_version)
    throw BundleVersionMismatch(j.value("version", -1));
  ModelSpec spec;
  spec.baseline = bundle_detail::baseline_from_name(j.at("basehaz"));
  if (j.contains("basehaz_spline"))
    spec.baseline_spline = spline_from_json(
        j.at("basehaz_spline"), spec.baseline == Baseline::MSpline
                                    ? BasisKind::MSpline
                                    : BasisKind::BSpline);
  spec.covariate_names = j.at("covariates").get<std::vector<std::string>>();
  spec.qnodes = j.value("qnodes", 15);
  spec.prior_only = j.value("prior_only", false);
  if (j.contains("mesh")) {
    spec.mesh.refine = j["mesh"].value("refine", 1);
    spec.mesh.grade_panels = j["mesh"].value("grade_panels", 4);
    spec.mesh.grade_ratio = j["mesh"].value("grade_ratio", 4.0);
  }
  for (const auto& tj : j.at("tve")) {
    TveSpec t;
    const std::string cov = tj.at("covariate");
    auto it = std::find(spec.covariate_names.begin(), spec.covariate_names.end(), cov);
    if (it == spec.covariate_names.end())
      throw std::invalid_argument("tve covariate missing from covariates");
    t.covariate_index = static_cast<std::size_t>(it - spec.covariate_names.begin());
    t.form = tj.value("piecewise", false) ? TveForm::PiecewiseConstant
                                          : TveForm::BsplineSmooth;
    t.spline = spline_from_json(tj.at("spline"), BasisKind::BSpline);
    spec.tve.push_back(t);
  }
  for (const auto& rj : j.at("re")) {
    ReTerm r;
    r.factor = rj.at("factor");
    if (rj.contains("slope")) {
      const std::string cov = rj.at("slope");
      auto it = std::find(spec.covariate_names.begin(), spec.covariate_names.end(), cov);
      if (it == spec.covariate_names.end())
        throw std::invalid_argument("slope covariate missing from covariates");
      r.slope_covariate = static_cast<std::size_t>(it - spec.covariate_names.begin());
    }
    spec.re.push_back(r);
  }
  const auto& pj = j.at("priors");
  spec.priors.intercept = prior_from_json(pj.at("intercept"));
  spec.priors.coef = prior_from_json(pj.at("coef"));
  spec.priors.aux = prior_from_json(pj.at("aux"));
  spec.priors.bspline_coef = prior_from_json(pj.at("bspline_coef"));
  spec.priors.smooth = prior_from_json(pj.at("smooth"));
  spec.priors.mspline_concentration = pj.value("mspline_concentration", 1.0);
  const auto& cj = pj.at("covariance");
  spec.priors.covariance.lkj_regularisation = cj.value("lkj_regularisation", 1.0);
  spec.priors.covariance.simplex_concentration =
      cj.value("simplex_concentration", 1.0);
  spec.priors.covariance.gamma_shape = cj.value("gamma_shape", 1.0);
  spec.priors.covariance.gamma_scale = cj.value("gamma_scale", 1.0);
  return spec;
}

// Data written in the normalised schema used by load_dataset.
inline void write_data_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "entry,time,upper,status";
  for (const auto& c : ds.covariate_names) out << "," << c;
  std::vector<std::string> factors;
  for (const auto& [f, _] : ds.factor_levels) factors.push_back(f);
  for (const auto& f : factors) out << "," << f;
  out << "\n";
  for (const auto& r : ds.records) {
    out << bundle_detail::format_double(r.entry_time) << ","
        << bundle_detail::format_double(r.time) << ",";
    if (r.upper_time) out << bundle_detail::format_double(*r.upper_time);
    out << "," << static_cast<int>(r.status);
    for (double x : r.covariates) out << "," << bundle_detail::format_double(x);
    for (const auto& f : factors) out << "," << r.cluster_labels.at(f);
    out << "\n";
  }
}

inline Dataset read_data_csv(const std::string& path,
                             const std::vector<std::string>& covariates,
                             const std::vector<std::string>& factors) {
  DataSchema schema;
  schema.entry = "entry";
  schema.time = "time";
  schema.upper = "upper";
  schema.status = "status";
  schema.covariates = covariates;
  schema.factors = factors;
  return load_dataset(path, schema);
}

struct FitBundle {
  ModelSpec spec;
  std::string formula;
  Dataset data;
  FitDraws draws;
  nlohmann::json diagnostics;
};

inline void write_bundle(const std::string& dir, const ModelContext& ctx,
                         const FitResult& fit, const std::string& formula) {
  namespace fs = std::filesystem;
  const fs::path final_dir(dir);
  const fs::path tmp_dir(dir + ".tmp");
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir);

  {
    std::ofstream out(tmp_dir / "spec.json");
    auto j = spec_to_json(ctx.spec, formula);
    j["t_max"] = ctx.t_max;
    j["seed"] = fit.config.seed;
    j["chains"] = fit.config.chains;
    j["iters"] = fit.config.iters;
    j["warmup"] = fit.config.warmup;
    j["target_accept"] = fit.config.target_accept;
    out << j.dump(2) << "\n";
  }
  write_data_csv(ctx.data, (tmp_dir / "data.csv").string());
  {
    std::ofstream out(tmp_dir / "draws.csv");
    const auto& d = fit.draws;
    out << "chain__";
    for (const auto& n : d.names) out << "," << n;
    out << "\n";
    for (std::size_t s = 0; s < d.n_draws(); ++s) {
      out << d.chain_id[s];
      const auto row = d.row(s);
      for (double v : row) out << "," << bundle_detail::format_double(v);
      out << "\n";
    }
  }
  {
    nlohmann::json j;
    std::size_t div = 0;
    for (auto v : fit.draws.stats.divergent) div += v;
    j["divergent_count"] = div;
    j["divergent_fraction"] =
        fit.draws.n_draws() ? static_cast<double>(div) / fit.draws.n_draws() : 0;
    j["step_size"] = fit.draws.stats.step_size;
    j["n_leapfrog"] = fit.draws.stats.n_leapfrog;
    j["treedepth"] = fit.draws.stats.treedepth;
    j["divergent"] = fit.draws.stats.divergent;
    nlohmann::json per_param = nlohmann::json::array();
    for (std::size_t c = 0; c < fit.draws.n_cols; ++c) {
      auto vals = fit.draws.column_values(c);
      std::vector<std::vector<double>> chains(fit.draws.n_chains);
      for (std::size_t s = 0; s < vals.size(); ++s)
        chains[fit.draws.chain_id[s]].push_back(vals[s]);
      nlohmann::json pj;
      pj["name"] = fit.draws.names[c];
      bool constant = true;
      for (double v : vals) constant = constant && v == vals[0];
      if (!constant && fit.draws.n_chains >= 2) {
        auto re = rhat_ess(chains);
        pj["rhat"] = re.rhat;
        pj["ess"] = re.ess;
      }
      per_param.push_back(pj);
    }
    j["parameters"] = per_param;
    std::ofstream out(tmp_dir / "diagnostics.json");
    out << j.dump(2) << "\n";
  }
  fs::remove_all(final_dir);
  fs::rename(tmp_dir, final_dir);
}

inline FitBundle read_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  FitBundle b;
  nlohmann::json sj;
  {
    std::ifstream in(fs::path(dir) / "spec.json");
    if (!in) throw std::ios_base::failure("cannot open " + dir + "/spec.json");
    in >> sj;
  }
  b.spec = spec_from_json(sj);
  b.formula = sj.value("formula", "");
  std::vector<std::string> factors;
  for (const auto& r : b.spec.re) factors.push_back(r.factor);
  b.data = read_data_csv((fs::path(dir) / "data.csv").string(),
                         b.spec.covariate_names, factors);
  {
    std::ifstream in(fs::path(dir) / "draws.csv");
    if (!in) throw std::ios_base::failure("cannot open " + dir + "/draws.csv");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty draws.csv");
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "chain__")
      throw std::runtime_error("draws.csv missing chain__ column");
    b.draws.names.assign(header.begin() + 1, header.end());
    b.draws.n_cols = b.draws.names.size();
    int max_chain = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != header.size())
        throw std::runtime_error("draws.csv row width mismatch");
      b.draws.chain_id.push_back(std::stoi(cells[0]));
      max_chain = std::max(max_chain, b.draws.chain_id.back());
      for (std::size_t c = 1; c < cells.size(); ++c)
        b.draws.draws.push_back(std::stod(cells[c]));
    }
    b.draws.n_chains = max_chain + 1;
  }
  {
    std::ifstream in(fs::path(dir) / "diagnostics.json");
    if (in) in >> b.diagnostics;
  }
  return b;
}

// Rebuilds the run context and reconstructs the report layout so that
// reloaded draws line up with freshly generated column offsets.
inline ModelContext context_from_bundle(const FitBundle& b) {
  ModelContext ctx = build_context(b.spec, b.data);
  return ctx;
}

inline void attach_report_layout(const ModelContext& ctx, FitDraws& draws) {
  auto [names, rl] = report_names(ctx);
  if (names != draws.names)
    throw std::runtime_error(
        "draws.csv column names do not match the model configuration");
  draws.cols = rl;
}

}  // namespace survmc
