#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

// Reverse-mode automatic differentiation on a per-thread tape.
//
// The model code is templated on a scalar type; instantiating it with
// ad::Var records the computation on the active tape so a single reverse
// sweep yields the full gradient.  Instantiating with double performs a
// plain evaluation with no recording.

namespace survmc::ad {

class Tape {
 public:
  // Registers an independent variable and returns its node index.
  std::uint32_t input() {
    nodes_.push_back({static_cast<std::uint32_t>(args_.size()), 0});
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t unary(std::uint32_t p, double w) {
    args_.push_back({w, p});
    nodes_.push_back({static_cast<std::uint32_t>(args_.size() - 1), 1});
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t binary(std::uint32_t p0, double w0, std::uint32_t p1, double w1) {
    args_.push_back({w0, p0});
    args_.push_back({w1, p1});
    nodes_.push_back({static_cast<std::uint32_t>(args_.size() - 2), 2});
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  // Variable-arity node: call begin_nary, then push_arg per parent.
  void begin_nary() { nary_first_ = static_cast<std::uint32_t>(args_.size()); }
  void push_arg(std::uint32_t p, double w) { args_.push_back({w, p}); }
  std::uint32_t end_nary() {
    nodes_.push_back({nary_first_,
                      static_cast<std::uint32_t>(args_.size() - nary_first_)});
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::size_t size() const { return nodes_.size(); }

  // Drops every node recorded after the first n_keep (the inputs survive
  // across repeated evaluations of the same function).
  void rewind(std::size_t n_keep) {
    assert(n_keep <= nodes_.size());
    nodes_.resize(n_keep);
    args_.resize(n_keep == 0 ? 0 : nodes_.back().first + nodes_.back().count);
  }

  void clear() {
    nodes_.clear();
    args_.clear();
  }

  // Reverse sweep from `root`; writes d root / d node_i for i < n_inputs.
  void gradient(std::uint32_t root, std::span<double> out) const {
    adjoint_.assign(nodes_.size(), 0.0);
    adjoint_[root] = 1.0;
    for (std::uint32_t i = static_cast<std::uint32_t>(nodes_.size()); i-- > 0;) {
      const double a = adjoint_[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      for (std::uint32_t k = 0; k < n.count; ++k) {
        const Arg& arg = args_[n.first + k];
        adjoint_[arg.parent] += arg.weight * a;
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = adjoint_[i];
  }

 private:
  struct Node {
    std::uint32_t first;
    std::uint32_t count;
  };
  struct Arg {
    double weight;
    std::uint32_t parent;
  };
  std::vector<Node> nodes_;
  std::vector<Arg> args_;
  std::uint32_t nary_first_ = 0;
  mutable std::vector<double> adjoint_;
};

namespace detail {
inline Tape*& tape_slot() {
  thread_local Tape* t = nullptr;
  return t;
}
}  // namespace detail

inline Tape& active_tape() {
  assert(detail::tape_slot() != nullptr && "no active AD tape on this thread");
  return *detail::tape_slot();
}

// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(detail::tape_slot()) {
    detail::tape_slot() = &t;
  }
  ~TapeScope() { detail::tape_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

class Var {
 public:
  Var() : v_(0), i_(active_tape().input()) {}
  explicit Var(double v) : v_(v), i_(active_tape().input()) {}
  Var(double v, std::uint32_t i) : v_(v), i_(i) {}

  double val() const { return v_; }
  std::uint32_t index() const { return i_; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator+=(double c) { return *this = *this + c; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator*=(double c) { return *this = *this * c; }

  friend Var operator+(const Var& a, const Var& b) {
    return {a.v_ + b.v_, active_tape().binary(a.i_, 1.0, b.i_, 1.0)};
  }
  // Adding a constant leaves the derivative untouched, so the node is shared.
  friend Var operator+(const Var& a, double c) { return {a.v_ + c, a.i_}; }
  friend Var operator+(double c, const Var& a) { return a + c; }

  friend Var operator-(const Var& a, const Var& b) {
    return {a.v_ - b.v_, active_tape().binary(a.i_, 1.0, b.i_, -1.0)};
  }
  friend Var operator-(const Var& a, double c) { return {a.v_ - c, a.i_}; }
  friend Var operator-(double c, const Var& a) {
    return {c - a.v_, active_tape().unary(a.i_, -1.0)};
  }
  friend Var operator-(const Var& a) {
    return {-a.v_, active_tape().unary(a.i_, -1.0)};
  }

  friend Var operator*(const Var& a, const Var& b) {
    return {a.v_ * b.v_, active_tape().binary(a.i_, b.v_, b.i_, a.v_)};
  }
  friend Var operator*(const Var& a, double c) {
    return {a.v_ * c, active_tape().unary(a.i_, c)};
  }
  friend Var operator*(double c, const Var& a) { return a * c; }

  friend Var operator/(const Var& a, const Var& b) {
    const double inv = 1.0 / b.v_;
    return {a.v_ * inv,
            active_tape().binary(a.i_, inv, b.i_, -a.v_ * inv * inv)};
  }
  friend Var operator/(const Var& a, double c) { return a * (1.0 / c); }
  friend Var operator/(double c, const Var& b) {
    const double inv = 1.0 / b.v_;
    return {c * inv, active_tape().unary(b.i_, -c * inv * inv)};
  }

 private:
  double v_;
  std::uint32_t i_;
};

inline Var exp(const Var& a) {
  const double v = std::exp(a.val());
  return {v, active_tape().unary(a.index(), v)};
}

inline Var log(const Var& a) {
  return {std::log(a.val()), active_tape().unary(a.index(), 1.0 / a.val())};
}

inline Var log1p(const Var& a) {
  return {std::log1p(a.val()),
          active_tape().unary(a.index(), 1.0 / (1.0 + a.val()))};
}

inline Var expm1(const Var& a) {
  const double v = std::expm1(a.val());
  return {v, active_tape().unary(a.index(), v + 1.0)};
}

inline Var sqrt(const Var& a) {
  const double v = std::sqrt(a.val());
  return {v, active_tape().unary(a.index(), 0.5 / v)};
}

inline Var tanh(const Var& a) {
  const double v = std::tanh(a.val());
  return {v, active_tape().unary(a.index(), 1.0 - v * v)};
}

inline Var pow(const Var& a, double p) {
  const double v = std::pow(a.val(), p);
  return {v, active_tape().unary(a.index(), p * std::pow(a.val(), p - 1.0))};
}

inline Var fabs(const Var& a) {
  return {std::fabs(a.val()),
          active_tape().unary(a.index(), a.val() < 0 ? -1.0 : 1.0)};
}

// c0 + sum_i w_i x_i as a single tape node.
inline Var dot(std::span<const double> w, std::span<const Var> x,
               double c0 = 0.0) {
  assert(w.size() == x.size());
  Tape& t = active_tape();
  t.begin_nary();
  double v = c0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    v += w[i] * x[i].val();
    t.push_arg(x[i].index(), w[i]);
  }
  return {v, t.end_nary()};
}

// sum_i w_i x_i with Var weights and Var values (both differentiated).
inline Var dot(std::span<const Var> w, std::span<const Var> x) {
  assert(w.size() == x.size());
  Tape& t = active_tape();
  t.begin_nary();
  double v = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    v += w[i].val() * x[i].val();
    t.push_arg(w[i].index(), x[i].val());
    t.push_arg(x[i].index(), w[i].val());
  }
  return {v, t.end_nary()};
}

inline Var dot(std::span<const Var> w, std::span<const double> x) {
  assert(w.size() == x.size());
  Tape& t = active_tape();
  t.begin_nary();
  double v = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    v += w[i].val() * x[i];
    t.push_arg(w[i].index(), x[i]);
  }
  return {v, t.end_nary()};
}

inline Var sum(std::span<const Var> x) {
  Tape& t = active_tape();
  t.begin_nary();
  double v = 0.0;
  for (const Var& xi : x) {
    v += xi.val();
    t.push_arg(xi.index(), 1.0);
  }
  return {v, t.end_nary()};
}

// value_of lets templated code branch on magnitudes for either scalar type.
inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.val(); }

}  // namespace survmc::ad

// Generic math helpers usable with S = double or S = ad::Var.
namespace survmc {

template <class S>
S sm_exp(const S& x) {
  using std::exp;
  using survmc::ad::exp;
  return exp(x);
}
template <class S>
S sm_log(const S& x) {
  using std::log;
  using survmc::ad::log;
  return log(x);
}
template <class S>
S sm_log1p(const S& x) {
  using std::log1p;
  using survmc::ad::log1p;
  return log1p(x);
}
template <class S>
S sm_expm1(const S& x) {
  using std::expm1;
  using survmc::ad::expm1;
  return expm1(x);
}
template <class S>
S sm_sqrt(const S& x) {
  using std::sqrt;
  using survmc::ad::sqrt;
  return sqrt(x);
}
template <class S>
S sm_tanh(const S& x) {
  using std::tanh;
  using survmc::ad::tanh;
  return tanh(x);
}
template <class S>
S sm_pow(const S& x, double p) {
  using std::pow;
  using survmc::ad::pow;
  return pow(x, p);
}

// A constant of the same scalar kind as an existing value.
template <class S>
S s_const_like(const S&, double v) {
  return S(v);
}

// log(1 - exp(x)) for x < 0, stable near both ends.
template <class S>
S log1m_exp(const S& x) {
  if (ad::value_of(x) > -0.6931471805599453) {
    return sm_log(-sm_expm1(x));
  }
  return sm_log1p(-sm_exp(x));
}

// log(exp(a) - exp(b)) for a > b.
template <class S>
S log_diff_exp(const S& a, const S& b) {
  return a + log1m_exp(b - a);
}

// log(exp(x) - 1), stable for large x.
template <class S>
S log_expm1(const S& x) {
  if (ad::value_of(x) > 37.0) return x + 0.0;  // 1/(1-e^-x) == 1 to machine eps
  return sm_log(sm_expm1(x));
}

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

template <class S, class M, class T>
auto normal_lpdf(const S& x, const M& mu, const T& sigma) {
  const auto z = (x - mu) / sigma;
  return -0.5 * (z * z) - sm_log(sigma) - 0.5 * log_two_pi;
}

}  // namespace survmc
