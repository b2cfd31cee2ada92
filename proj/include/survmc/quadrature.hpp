#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

// Fixed-order Gauss-Kronrod rules on the standardised interval [-1, 1] and
// their application to cumulative-hazard style integrals over [0, T].

namespace survmc {

struct QuadratureRule {
  int order = 15;
  std::vector<double> nodes;    // ascending in (-1, 1)
  std::vector<double> weights;  // positive, sum to 2
};

class UnsupportedOrder : public std::invalid_argument {
 public:
  explicit UnsupportedOrder(int q)
      : std::invalid_argument("unsupported quadrature order " +
                              std::to_string(q) + " (use 7, 11, or 15)") {}
};

namespace detail {

// Kronrod extensions of the 3-, 5-, and 7-point Gauss-Legendre rules.
// Positive half only; full rules are symmetric about zero.

inline constexpr double gk7_nodes[3] = {
    0.434243749346802557979689562995,
    0.774596669241483377010230176873,
    0.960491268708020283441286618631,
};
inline constexpr double gk7_center_weight =
    0.450916538658474142360578149069;
inline constexpr double gk7_weights[3] = {
    0.401397414775962222901898104888,
    0.268488089868333440745360243818,
    0.104656226026467265213110158228,
};

inline constexpr double gk11_nodes[5] = {
    0.279630413161783193399774830046,
    0.538469310105683091017755859120,
    0.754166726570849220423736064545,
    0.906179845938663992756939569162,
    0.984085360094842464477159910130,
};
inline constexpr double gk11_center_weight =
    0.282987417857491213205685040566;
inline constexpr double gk11_weights[5] = {
    0.272849801912558922350245799171,
    0.241040339228647586687268554451,
    0.186800796556492657433706967851,
    0.115233316622473394073389134362,
    0.042582036751081832883040209983,
};

inline constexpr double gk15_nodes[7] = {
    0.207784955007898467600410685741,
    0.405845151377397166917067317105,
    0.586087235467691130305460667227,
    0.741531185599394439863629030496,
    0.864864423359769072770838332920,
    0.949107912342758524486350385496,
    0.991455371120812639206681948778,
};
inline constexpr double gk15_center_weight =
    0.209482141084727828015885076063;
inline constexpr double gk15_weights[7] = {
    0.204432940075298892436471247247,
    0.190350578064785409907475402513,
    0.169004726639267902817153656214,
    0.140653259715525918722555526186,
    0.104790010322250183816229426870,
    0.063092092629978553321070788157,
    0.022935322010529224976183612465,
};

inline QuadratureRule expand(int order, const double* half_nodes,
                             double center_weight, const double* half_weights,
                             int pairs) {
  QuadratureRule r;
  r.order = order;
  r.nodes.resize(order);
  r.weights.resize(order);
  for (int j = 0; j < pairs; ++j) {
    r.nodes[pairs - 1 - j] = -half_nodes[j];
    r.weights[pairs - 1 - j] = half_weights[j];
    r.nodes[pairs + 1 + j] = half_nodes[j];
    r.weights[pairs + 1 + j] = half_weights[j];
  }
  r.nodes[pairs] = 0.0;
  r.weights[pairs] = center_weight;
  return r;
}

}  // namespace detail

inline QuadratureRule make_rule(int order) {
  switch (order) {
    case 7:
      return detail::expand(7, detail::gk7_nodes, detail::gk7_center_weight,
                            detail::gk7_weights, 3);
    case 11:
      return detail::expand(11, detail::gk11_nodes, detail::gk11_center_weight,
                            detail::gk11_weights, 5);
    case 15:
      return detail::expand(15, detail::gk15_nodes, detail::gk15_center_weight,
                            detail::gk15_weights, 7);
    default:
      throw UnsupportedOrder(order);
  }
}

// Single application of the rule over [0, T]:
//   (T/2) * sum_q w_q f(T(1+v_q)/2)
template <class F>
double integrate(const QuadratureRule& rule, F&& f, double upper) {
  if (!(upper > 0)) throw std::invalid_argument("integrate: upper must be > 0");
  const double h = 0.5 * upper;
  double acc = 0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double v = f(h * (1.0 + rule.nodes[q]));
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite integrand at quadrature node " +
                               std::to_string(q));
    acc += rule.weights[q] * v;
  }
  return h * acc;
}

// A fixed evaluation mesh for integrals over [0, T]: concrete node locations
// with pre-scaled weights so that integral ~= sum_j weights[j] * f(nodes[j]).
//
// The mesh applies the base rule once per panel.  Panels are the segments of
// [0, T] cut at the supplied breakpoints (spline knots, step locations), each
// optionally refined into `refine` equal parts.  When the integrand has a
// power singularity at zero (Weibull hazards with shape < 1), `grade_panels`
// geometric panels with ratio `grade_ratio` are inserted toward zero in the
// first segment; the remaining sliver at the origin is dropped, which keeps
// the mesh (and hence the likelihood) a smooth function of the parameters.
struct MeshConfig {
  int refine = 1;
  int grade_panels = 0;
  double grade_ratio = 4.0;
};

struct QuadratureMesh {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class F>
  double apply(F&& f) const {
    double acc = 0;
    for (std::size_t j = 0; j < nodes.size(); ++j) acc += weights[j] * f(nodes[j]);
    return acc;
  }
};

inline QuadratureMesh build_mesh(double upper, const QuadratureRule& rule,
                                 std::span<const double> breakpoints,
                                 const MeshConfig& cfg = {}) {
  if (!(upper > 0)) throw std::invalid_argument("build_mesh: upper must be > 0");
  std::vector<double> cuts;
  cuts.push_back(0.0);
  for (double b : breakpoints)
    if (b > 0.0 && b < upper) cuts.push_back(b);
  cuts.push_back(upper);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::pair<double, double>> panels;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    double a = cuts[s], b = cuts[s + 1];
    if (s == 0 && cfg.grade_panels > 0) {
      double hi = b;
      for (int k = 0; k < cfg.grade_panels; ++k) {
        double lo = hi / cfg.grade_ratio;
        panels.emplace_back(lo, hi);
        hi = lo;
      }
      continue;  // [0, hi) dropped; relative mass <= (hi/b)^power
    }
    const int refine = std::max(1, cfg.refine);
    for (int k = 0; k < refine; ++k)
      panels.emplace_back(a + (b - a) * k / refine, a + (b - a) * (k + 1) / refine);
  }

  QuadratureMesh mesh;
  mesh.nodes.reserve(panels.size() * rule.nodes.size());
  mesh.weights.reserve(panels.size() * rule.nodes.size());
  for (auto [a, b] : panels) {
    const double mid = 0.5 * (a + b), h = 0.5 * (b - a);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      mesh.nodes.push_back(mid + h * rule.nodes[q]);
      mesh.weights.push_back(h * rule.weights[q]);
    }
  }
  // Graded panels were emitted high-to-low; keep nodes ascending.
  std::vector<std::size_t> idx(mesh.nodes.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t i, std::size_t j) { return mesh.nodes[i] < mesh.nodes[j]; });
  QuadratureMesh sorted;
  sorted.nodes.reserve(idx.size());
  sorted.weights.reserve(idx.size());
  for (std::size_t i : idx) {
    sorted.nodes.push_back(mesh.nodes[i]);
    sorted.weights.push_back(mesh.weights[i]);
  }
  return sorted;
}

}  // namespace survmc
