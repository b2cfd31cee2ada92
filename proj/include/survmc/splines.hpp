#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmc/quadrature.hpp"

// M-spline, I-spline, and B-spline bases on a clamped knot sequence, plus
// the default knot-placement rule (boundaries at the data range, internal
// knots at equally spaced percentiles of the uncensored event times).

namespace survmc {

class OutOfSupport : public std::domain_error {
 public:
  OutOfSupport(double t, double lo, double hi)
      : std::domain_error("time " + std::to_string(t) +
                          " outside spline support [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]") {}
};

class EmptyUncensoredSet : public std::invalid_argument {
 public:
  EmptyUncensoredSet()
      : std::invalid_argument(
            "internal knots requested but no uncensored event times observed") {}
};

struct KnotVector {
  double lower_boundary = 0;
  std::vector<double> internal;
  double upper_boundary = 1;

  std::vector<double> all() const {
    std::vector<double> k;
    k.push_back(lower_boundary);
    k.insert(k.end(), internal.begin(), internal.end());
    k.push_back(upper_boundary);
    return k;
  }

  void validate() const {
    if (!(lower_boundary < upper_boundary))
      throw std::invalid_argument("knot boundaries out of order");
    double prev = lower_boundary;
    for (double k : internal) {
      if (k < prev) throw std::invalid_argument("internal knots not ascending");
      if (!(k > lower_boundary && k < upper_boundary))
        throw std::invalid_argument("internal knot outside boundary knots");
      prev = k;
    }
  }
};

enum class BasisKind { MSpline, ISpline, BSpline };

struct SplineConfig {
  int degree = 3;
  KnotVector knots;
  BasisKind basis_kind = BasisKind::MSpline;

  // L = internal knots + degree + 1
  std::size_t n_basis() const { return knots.internal.size() + degree + 1; }
};

// R type-7 quantile (linear interpolation between order statistics).
inline double quantile_type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - lo) * (v[lo + 1] - v[lo]);
}

// Boundary knots at the data range; internal knots at equally spaced
// percentiles of the distribution of uncensored event times.
inline KnotVector default_knots(std::span<const double> uncensored_times,
                                int n_internal,
                                std::span<const double> entry_times,
                                std::span<const double> all_times) {
  if (all_times.empty())
    throw std::invalid_argument("default_knots: no observation times");
  KnotVector kv;
  kv.lower_boundary =
      entry_times.empty()
          ? 0.0
          : *std::min_element(entry_times.begin(), entry_times.end());
  kv.upper_boundary = *std::max_element(all_times.begin(), all_times.end());
  if (n_internal > 0) {
    if (uncensored_times.empty()) throw EmptyUncensoredSet();
    std::vector<double> u(uncensored_times.begin(), uncensored_times.end());
    for (int j = 1; j <= n_internal; ++j) {
      double q = quantile_type7(u, static_cast<double>(j) / (n_internal + 1));
      q = std::clamp(q, kv.lower_boundary, kv.upper_boundary);
      kv.internal.push_back(q);
    }
  }
  kv.validate();
  return kv;
}

// Evaluator for one spline configuration.  Construction precomputes the
// clamped knot sequence and the per-interval integrals needed for I-splines.
class SplineBasis {
 public:
  explicit SplineBasis(const SplineConfig& cfg) : cfg_(cfg) {
    cfg_.knots.validate();
    if (cfg_.degree < 0 || cfg_.degree > 10)
      throw std::invalid_argument("spline degree must be in [0, 10]");
    const auto k = cfg_.knots.all();
    for (int i = 0; i < cfg_.degree; ++i) padded_.push_back(k.front());
    padded_.insert(padded_.end(), k.begin(), k.end());
    for (int i = 0; i < cfg_.degree; ++i) padded_.push_back(k.back());
    build_ispline_cache();
  }

  const SplineConfig& config() const { return cfg_; }
  std::size_t size() const { return cfg_.n_basis(); }
  double lower() const { return cfg_.knots.lower_boundary; }
  double upper() const { return cfg_.knots.upper_boundary; }

  // Full B-spline basis (partition of unity).  Right-continuous at knots;
  // the last interval is closed at the upper boundary.
  std::vector<double> bspline(double t) const {
    std::vector<double> out(size(), 0.0);
    bspline_into(clamp_to_support(t), out);
    return out;
  }

  // M-spline basis: each element non-negative and integrating to one.
  std::vector<double> mspline(double t) const {
    std::vector<double> out(size(), 0.0);
    mspline_into(clamp_to_support(t), out);
    return out;
  }

  // I-spline basis: running integral of the M-splines, 0 at the lower
  // boundary and 1 at the upper boundary.
  std::vector<double> ispline(double t) const {
    const double x = clamp_to_support(t);
    const std::size_t L = size();
    std::vector<double> out(L, 0.0);
    const auto k = cfg_.knots.all();
    std::size_t seg = 0;
    while (seg + 2 < k.size() && x >= k[seg + 1]) ++seg;
    for (std::size_t l = 0; l < L; ++l) out[l] = icache_[l][seg];
    if (x > k[seg]) {
      // Exact on the partial interval: the integrand is polynomial there.
      const double mid = 0.5 * (k[seg] + x), h = 0.5 * (x - k[seg]);
      std::vector<double> m(L, 0.0);
      for (std::size_t q = 0; q < rule_.nodes.size(); ++q) {
        std::fill(m.begin(), m.end(), 0.0);
        mspline_into(mid + h * rule_.nodes[q], m);
        const double w = h * rule_.weights[q];
        for (std::size_t l = 0; l < L; ++l) out[l] += w * m[l];
      }
    }
    return out;
  }

  void bspline_into(double x, std::span<double> out) const {
    const int d = cfg_.degree;
    const std::size_t mu = find_span(x);
    double N[12], left[12], right[12];
    N[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[j] = x - padded_[mu + 1 - j];
      right[j] = padded_[mu + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double den = right[r + 1] + left[j - r];
        const double temp = den > 0 ? N[r] / den : 0.0;
        N[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      N[j] = saved;
    }
    for (int r = 0; r <= d; ++r) out[mu - d + r] = N[r];
  }

  void mspline_into(double x, std::span<double> out) const {
    bspline_into(x, out);
    const int d = cfg_.degree;
    for (std::size_t l = 0; l < size(); ++l) {
      const double width = padded_[l + d + 1] - padded_[l];
      out[l] = width > 0 ? out[l] * (d + 1) / width : 0.0;
    }
  }

 private:
  double clamp_to_support(double t) const {
    const double lo = lower(), hi = upper();
    if (t < lo || t > hi) {
      if (t >= lo - 1e-12 && t <= hi + 1e-12) return std::clamp(t, lo, hi);
      throw OutOfSupport(t, lo, hi);
    }
    return t;
  }

  // Index mu with padded_[mu] <= x < padded_[mu+1] over non-degenerate
  // spans; x at the upper boundary maps to the last non-empty interval.
  std::size_t find_span(double x) const {
    const std::size_t d = cfg_.degree;
    const std::size_t hi = padded_.size() - d - 2;  // last valid span index
    if (x >= padded_[hi]) return hi;
    std::size_t lo = d, up = hi;
    while (lo < up) {
      std::size_t mid = (lo + up + 1) / 2;
      if (padded_[mid] <= x)
        lo = mid;
      else
        up = mid - 1;
    }
    return lo;
  }

  void build_ispline_cache() {
    const auto k = cfg_.knots.all();
    const std::size_t L = size();
    icache_.assign(L, std::vector<double>(k.size() - 1, 0.0));
    std::vector<double> run(L, 0.0), m(L, 0.0);
    for (std::size_t seg = 0; seg + 1 < k.size(); ++seg) {
      for (std::size_t l = 0; l < L; ++l) icache_[l][seg] = run[l];
      const double mid = 0.5 * (k[seg] + k[seg + 1]);
      const double h = 0.5 * (k[seg + 1] - k[seg]);
      if (h <= 0) continue;
      for (std::size_t q = 0; q < rule_.nodes.size(); ++q) {
        std::fill(m.begin(), m.end(), 0.0);
        mspline_into(mid + h * rule_.nodes[q], m);
        const double w = h * rule_.weights[q];
        for (std::size_t l = 0; l < L; ++l) run[l] += w * m[l];
      }
    }
  }

  SplineConfig cfg_;
  std::vector<double> padded_;
  std::vector<std::vector<double>> icache_;  // [basis][segment start]
  QuadratureRule rule_ = make_rule(15);
};

inline std::vector<double> bspline_eval(double t, const SplineConfig& cfg) {
  return SplineBasis(cfg).bspline(t);
}

inline std::vector<double> mspline_eval(double t, const SplineConfig& cfg) {
  return SplineBasis(cfg).mspline(t);
}

inline std::vector<double> ispline_eval(double t, const SplineConfig& cfg) {
  return SplineBasis(cfg).ispline(t);
}

}  // namespace survmc
