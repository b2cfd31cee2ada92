#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "survmc/rng.hpp"

// Dynamic Hamiltonian Monte Carlo (multinomial no-U-turn sampler) with
// dual-averaging step-size adaptation and windowed diagonal mass-matrix
// estimation during warmup.  Generic over any log-density target exposing
//   std::size_t dim() const;
//   double logp_grad(std::span<const double> q, std::span<double> grad) const;
// Chains run on separate threads with independent counter-based RNG streams
// derived from (seed, chain), so results are reproducible at any thread
// count.

namespace survmc {

struct NutsConfig {
  int chains = 4;
  int warmup = 1000;
  int iters = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.95;
  int max_treedepth = 10;
  double init_range = 2.0;  // uniform(-r, r) initial values
  int init_retries = 100;
  int threads = 0;  // 0: one thread per chain up to hardware_concurrency
  // Optional fixed starting point (used instead of random inits when set).
  std::vector<double> init;
};

struct SamplerDiagnostics {
  std::vector<std::uint8_t> divergent;  // per kept draw
  std::vector<int> treedepth;
  std::vector<double> accept_stat;
  std::vector<double> energy;
  std::vector<double> step_size;     // per chain, post-warmup
  std::vector<std::size_t> n_leapfrog;  // per chain totals
};

struct RawDraws {
  std::size_t dim = 0;
  std::vector<double> draws;  // row-major, (chains*iters) x dim, unconstrained
  std::vector<int> chain_id;
  SamplerDiagnostics stats;

  std::span<const double> row(std::size_t s) const {
    return {draws.data() + s * dim, dim};
  }
  std::size_t n_draws() const { return chain_id.size(); }
};

class NonFiniteInit : public std::runtime_error {
 public:
  NonFiniteInit()
      : std::runtime_error(
            "failed to find a starting point with finite log density and "
            "gradient") {}
};

namespace nuts_detail {

struct State {
  std::vector<double> q, p, grad;
  double lp = 0;
};

template <class Target>
class Chain {
 public:
  Chain(const Target& target, const NutsConfig& cfg, int chain_id)
      : target_(target),
        cfg_(cfg),
        rng_(cfg.seed, static_cast<std::uint64_t>(chain_id)),
        n_(target.dim()),
        inv_mass_(n_, 1.0) {}

  // Runs warmup + sampling; appends kept draws via the callback
  // (called with the current state after each post-warmup transition).
  template <class Keep>
  void run(Keep&& keep, SamplerDiagnostics& stats, std::size_t stat_offset) {
    initialize();
    find_reasonable_step();
    da_reset(step_);

    const int W = cfg_.warmup;
    setup_windows(W);
    welford_reset();

    for (int it = 0; it < W; ++it) {
      transition();
      da_update(last_accept_);
      step_ = da_eps_;
      if (in_variance_window(it)) welford_add(cur_.q);
      if (window_closes_at(it)) {
        update_mass_from_welford();
        welford_reset();
        find_reasonable_step();
        da_reset(step_);
      }
    }
    step_ = (W > 0) ? da_eps_bar_ : step_;

    for (int it = 0; it < cfg_.iters; ++it) {
      transition();
      const std::size_t s = stat_offset + static_cast<std::size_t>(it);
      stats.divergent[s] = last_divergent_ ? 1 : 0;
      stats.treedepth[s] = last_depth_;
      stats.accept_stat[s] = last_accept_;
      stats.energy[s] = last_energy_;
      keep(cur_.q, cur_.lp, it);
    }
    final_step_ = step_;
    total_leapfrog_ = n_leapfrog_;
  }

  double final_step() const { return final_step_; }
  std::size_t total_leapfrog() const { return total_leapfrog_; }

 private:
  void initialize() {
    cur_.q.resize(n_);
    cur_.p.resize(n_);
    cur_.grad.resize(n_);
    if (!cfg_.init.empty()) {
      if (cfg_.init.size() != n_)
        throw std::invalid_argument("init vector has wrong dimension");
      cur_.q = cfg_.init;
      cur_.lp = target_.logp_grad(cur_.q, cur_.grad);
      if (finite_state(cur_)) return;
      throw NonFiniteInit();
    }
    for (int attempt = 0; attempt < cfg_.init_retries; ++attempt) {
      for (auto& qi : cur_.q) qi = rng_.uniform(-cfg_.init_range, cfg_.init_range);
      cur_.lp = target_.logp_grad(cur_.q, cur_.grad);
      if (finite_state(cur_)) return;
    }
    throw NonFiniteInit();
  }

  static bool finite_state(const State& s) {
    if (!std::isfinite(s.lp)) return false;
    for (double g : s.grad)
      if (!std::isfinite(g)) return false;
    return true;
  }

  double kinetic(const std::vector<double>& p) const {
    double k = 0;
    for (std::size_t i = 0; i < n_; ++i) k += p[i] * p[i] * inv_mass_[i];
    return 0.5 * k;
  }

  void sample_momentum(std::vector<double>& p) {
    for (std::size_t i = 0; i < n_; ++i)
      p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
  }

  // One leapfrog step in place; returns false when the density blew up.
  bool leapfrog(State& s, double eps) {
    for (std::size_t i = 0; i < n_; ++i) s.p[i] += 0.5 * eps * s.grad[i];
    for (std::size_t i = 0; i < n_; ++i) s.q[i] += eps * inv_mass_[i] * s.p[i];
    s.lp = target_.logp_grad(s.q, s.grad);
    ++n_leapfrog_;
    if (!std::isfinite(s.lp)) return false;
    for (std::size_t i = 0; i < n_; ++i) s.p[i] += 0.5 * eps * s.grad[i];
    return true;
  }

  void find_reasonable_step() {
    State s = cur_;
    sample_momentum(s.p);
    const double h0 = -s.lp + kinetic(s.p);
    State trial = s;
    double eps = step_ > 0 ? step_ : 1.0;
    if (!leapfrog(trial, eps)) {
      for (int k = 0; k < 60 && !std::isfinite(trial.lp); ++k) {
        eps *= 0.5;
        trial = s;
        leapfrog(trial, eps);
      }
    }
    double h1 = std::isfinite(trial.lp) ? -trial.lp + kinetic(trial.p)
                                        : std::numeric_limits<double>::infinity();
    double accept = std::exp(h0 - h1);
    const double dir = accept > 0.5 ? 2.0 : 0.5;
    for (int k = 0; k < 60; ++k) {
      if ((dir > 1 && accept <= 0.5) || (dir < 1 && accept >= 0.5)) break;
      eps *= dir;
      trial = s;
      if (!leapfrog(trial, eps)) {
        accept = 0.0;
        continue;
      }
      h1 = -trial.lp + kinetic(trial.p);
      accept = std::exp(h0 - h1);
    }
    step_ = std::min(std::max(eps, 1e-10), 1e7);
  }

  // ---- dual averaging ----
  void da_reset(double eps) {
    da_mu_ = std::log(10.0 * eps);
    da_log_eps_bar_ = std::log(eps);
    da_h_bar_ = 0;
    da_m_ = 0;
    da_eps_ = eps;
    da_eps_bar_ = eps;
  }
  void da_update(double accept) {
    constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    ++da_m_;
    const double m = static_cast<double>(da_m_);
    da_h_bar_ = (1.0 - 1.0 / (m + t0)) * da_h_bar_ +
                (cfg_.target_accept - accept) / (m + t0);
    const double log_eps = da_mu_ - std::sqrt(m) / gamma * da_h_bar_;
    const double eta = std::pow(m, -kappa);
    da_log_eps_bar_ = eta * log_eps + (1.0 - eta) * da_log_eps_bar_;
    da_eps_ = std::exp(log_eps);
    da_eps_bar_ = std::exp(da_log_eps_bar_);
  }

  // ---- mass-matrix windows (init buffer, doubling windows, term buffer) ----
  void setup_windows(int warmup) {
    window_ends_.clear();
    if (warmup < 40) return;  // too short to adapt the metric
    int init_buf = 75, term_buf = 50, base = 25;
    if (warmup < 150) {
      init_buf = static_cast<int>(0.15 * warmup);
      term_buf = static_cast<int>(0.10 * warmup);
      base = std::max(1, (warmup - init_buf - term_buf) / 4);
    }
    var_start_ = init_buf;
    const int last = warmup - term_buf;
    int w_start = init_buf, width = base;
    while (w_start + width <= last) {
      int end = w_start + width;
      if (w_start + width + 2 * width > last) end = last;  // absorb remainder
      window_ends_.push_back(end - 1);
      w_start = end;
      width *= 2;
    }
  }
  bool in_variance_window(int it) const {
    return !window_ends_.empty() && it >= var_start_ &&
           it <= window_ends_.back();
  }
  bool window_closes_at(int it) const {
    return std::find(window_ends_.begin(), window_ends_.end(), it) !=
           window_ends_.end();
  }

  void welford_reset() {
    w_n_ = 0;
    w_mean_.assign(n_, 0.0);
    w_m2_.assign(n_, 0.0);
  }
  void welford_add(const std::vector<double>& q) {
    ++w_n_;
    for (std::size_t i = 0; i < n_; ++i) {
      const double d = q[i] - w_mean_[i];
      w_mean_[i] += d / static_cast<double>(w_n_);
      w_m2_[i] += d * (q[i] - w_mean_[i]);
    }
  }
  void update_mass_from_welford() {
    if (w_n_ < 2) return;
    const double n = static_cast<double>(w_n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double var = w_m2_[i] / (n - 1);
      inv_mass_[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
    }
  }

  // ---- NUTS transition ----
  struct Tree {
    State minus, plus;
    std::vector<double> q_prop;
    double lp_prop = 0;
    double log_sum_w = -std::numeric_limits<double>::infinity();
    double sum_accept = 0;
    std::size_t n_states = 0;
    bool divergent = false;
    bool turning = false;
  };

  bool uturn(const State& minus, const State& plus) const {
    double dm = 0, dp = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double rho = plus.q[i] - minus.q[i];
      dm += rho * inv_mass_[i] * minus.p[i];
      dp += rho * inv_mass_[i] * plus.p[i];
    }
    return dm < 0 || dp < 0;
  }

  static double logsumexp2(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  void build_tree(Tree& out, const State& from, int depth, double dir,
                  double h0) {
    if (depth == 0) {
      State s = from;
      const bool ok = leapfrog(s, dir * step_);
      const double h = ok ? -s.lp + kinetic(s.p)
                          : std::numeric_limits<double>::infinity();
      const double dh = h0 - h;  // log weight
      out.minus = s;
      out.plus = s;
      out.q_prop = s.q;
      out.lp_prop = s.lp;
      out.log_sum_w = dh;
      out.sum_accept = std::min(1.0, std::exp(dh));
      out.n_states = 1;
      out.divergent = !(dh > -1000.0);
      out.turning = false;
      return;
    }
    build_tree(out, from, depth - 1, dir, h0);
    if (out.divergent || out.turning) return;
    Tree second;
    build_tree(second, dir > 0 ? out.plus : out.minus, depth - 1, dir, h0);
    out.sum_accept += second.sum_accept;
    out.n_states += second.n_states;
    if (second.divergent || second.turning) {
      out.divergent = second.divergent;
      out.turning = second.turning;
      return;
    }
    const double total = logsumexp2(out.log_sum_w, second.log_sum_w);
    if (std::log(rng_.uniform()) < second.log_sum_w - total) {
      out.q_prop = std::move(second.q_prop);
      out.lp_prop = second.lp_prop;
    }
    out.log_sum_w = total;
    if (dir > 0)
      out.plus = std::move(second.plus);
    else
      out.minus = std::move(second.minus);
    out.turning = uturn(out.minus, out.plus);
  }

  void transition() {
    sample_momentum(cur_.p);
    const double h0 = -cur_.lp + kinetic(cur_.p);
    Tree tree;
    tree.minus = cur_;
    tree.plus = cur_;
    tree.q_prop = cur_.q;
    tree.lp_prop = cur_.lp;
    tree.log_sum_w = 0.0;  // weight of the initial state: exp(h0 - h0)
    tree.sum_accept = 0;
    tree.n_states = 0;
    int depth = 0;
    bool divergent = false;
    Tree sub;
    for (; depth < cfg_.max_treedepth; ++depth) {
      const double dir = rng_.uniform() < 0.5 ? -1.0 : 1.0;
      build_tree(sub, dir > 0 ? tree.plus : tree.minus, depth, dir, h0);
      tree.sum_accept += sub.sum_accept;
      tree.n_states += sub.n_states;
      if (sub.divergent) {
        divergent = true;
        break;
      }
      if (sub.turning) break;
      // biased progressive sampling toward the new subtree
      if (std::log(rng_.uniform()) < sub.log_sum_w - tree.log_sum_w) {
        tree.q_prop = sub.q_prop;
        tree.lp_prop = sub.lp_prop;
      }
      tree.log_sum_w = logsumexp2(tree.log_sum_w, sub.log_sum_w);
      if (dir > 0)
        tree.plus = sub.plus;
      else
        tree.minus = sub.minus;
      if (uturn(tree.minus, tree.plus)) {
        ++depth;
        break;
      }
    }
    cur_.q = tree.q_prop;
    cur_.lp = tree.lp_prop;
    cur_.lp = target_.logp_grad(cur_.q, cur_.grad);  // refresh gradient cache
    last_accept_ = tree.n_states > 0
                       ? tree.sum_accept / static_cast<double>(tree.n_states)
                       : 0.0;
    last_depth_ = depth;
    last_divergent_ = divergent;
    last_energy_ = h0;
  }

  Target target_;
  NutsConfig cfg_;
  CounterRng rng_;
  std::size_t n_;
  std::vector<double> inv_mass_;
  State cur_;
  double step_ = 1.0;
  double final_step_ = 1.0;
  std::size_t n_leapfrog_ = 0;
  std::size_t total_leapfrog_ = 0;

  double da_mu_ = 0, da_log_eps_bar_ = 0, da_h_bar_ = 0, da_eps_ = 1,
         da_eps_bar_ = 1;
  int da_m_ = 0;

  std::vector<int> window_ends_;
  int var_start_ = 0;
  std::size_t w_n_ = 0;
  std::vector<double> w_mean_, w_m2_;

  double last_accept_ = 0;
  int last_depth_ = 0;
  bool last_divergent_ = false;
  double last_energy_ = 0;
};

}  // namespace nuts_detail

// Runs `cfg.chains` chains and returns all kept draws (unconstrained scale).
// The per-draw callback, when provided, observes (chain, iter, q) on the
// sampling thread -- used by the model layer to store constrained draws.
template <class Target, class PerDraw>
RawDraws nuts_sample(const Target& target, const NutsConfig& cfg,
                     PerDraw&& per_draw) {
  const std::size_t n = target.dim();
  const std::size_t total =
      static_cast<std::size_t>(cfg.chains) * static_cast<std::size_t>(cfg.iters);
  RawDraws out;
  out.dim = n;
  out.draws.assign(total * n, 0.0);
  out.chain_id.assign(total, 0);
  out.stats.divergent.assign(total, 0);
  out.stats.treedepth.assign(total, 0);
  out.stats.accept_stat.assign(total, 0.0);
  out.stats.energy.assign(total, 0.0);
  out.stats.step_size.assign(cfg.chains, 0.0);
  out.stats.n_leapfrog.assign(cfg.chains, 0);

  std::vector<std::exception_ptr> errors(cfg.chains);
  auto run_chain = [&](int c) {
    try {
      nuts_detail::Chain<Target> chain(target, cfg, c);
      const std::size_t offset =
          static_cast<std::size_t>(c) * static_cast<std::size_t>(cfg.iters);
      chain.run(
          [&](const std::vector<double>& q, double lp, int it) {
            const std::size_t s = offset + static_cast<std::size_t>(it);
            std::copy(q.begin(), q.end(), out.draws.begin() + s * n);
            out.chain_id[s] = c;
            per_draw(c, it, std::span<const double>(q), lp);
          },
          out.stats, offset);
      out.stats.step_size[c] = chain.final_step();
      out.stats.n_leapfrog[c] = chain.total_leapfrog();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 2;
  const int workers =
      cfg.threads > 0 ? cfg.threads : static_cast<int>(std::min<unsigned>(
                                          hw, static_cast<unsigned>(cfg.chains)));
  if (workers <= 1) {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (int c = next.fetch_add(1); c < cfg.chains; c = next.fetch_add(1))
          run_chain(c);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

template <class Target>
RawDraws nuts_sample(const Target& target, const NutsConfig& cfg) {
  return nuts_sample(target, cfg,
                     [](int, int, std::span<const double>, double) {});
}

}  // namespace survmc
