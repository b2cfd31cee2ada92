#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "survmc/aft.hpp"
#include "survmc/rng.hpp"

using namespace survmc;

TEST_CASE("AFT closed-form survival") {
  auto e = AftFamily::exponential();
  REQUIRE(aft_log_survival(e, 1.0, 0.0) == Catch::Approx(-1.0));
  auto w = AftFamily::weibull_aft(2.0);
  REQUIRE(aft_log_survival(w, 1.0, 0.5) == Catch::Approx(-std::exp(-1.0)));
  // Weibull shape 1 reduces to the exponential
  auto w1 = AftFamily::weibull_aft(1.0);
  CounterRng rng(9, 0);
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform(0.0, 6.0);
    const double eta = rng.uniform(-2.0, 2.0);
    REQUIRE(aft_log_survival(w1, t, eta) ==
            Catch::Approx(aft_log_survival(e, t, eta)).margin(1e-12));
  }
  REQUIRE_THROWS_AS(aft_log_survival(e, -1.0, 0.0), std::domain_error);
}

TEST_CASE("AFT closed-form hazard") {
  auto e = AftFamily::exponential();
  REQUIRE(aft_log_hazard(e, 3.0, 0.7) == Catch::Approx(-0.7));
  REQUIRE(aft_log_hazard(e, 9.0, 0.7) == Catch::Approx(-0.7));
  auto w = AftFamily::weibull_aft(2.0);
  REQUIRE(aft_log_hazard(w, 3.0, 0.0) == Catch::Approx(std::log(6.0)));

  // -d/dt log S(t) equals the hazard (finite differences)
  CounterRng rng(10, 0);
  for (int i = 0; i < 50; ++i) {
    const double t = rng.uniform(0.3, 5.0);
    const double eta = rng.uniform(-1.0, 1.0);
    const double h = 1e-6 * t;
    const double fd = -(aft_log_survival(w, t + h, eta) -
                        aft_log_survival(w, t - h, eta)) /
                      (2 * h);
    REQUIRE(fd == Catch::Approx(std::exp(aft_log_hazard(w, t, eta))).epsilon(1e-6));
  }
}

TEST_CASE("cumulative acceleration factor") {
  const auto rule = make_rule(15);
  REQUIRE(cumulative_acceleration([](double) { return 0.0; }, 4.0, rule) ==
          Catch::Approx(4.0).margin(1e-13));
  // eta(u) = u on [0,1]: integral of exp(-u) = 1 - 1/e
  REQUIRE(cumulative_acceleration([](double u) { return u; }, 1.0, rule) ==
          Catch::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  // smooth cubic eta: fine-grid trapezoid oracle
  auto eta = [](double u) { return 0.3 - 0.2 * u + 0.05 * u * u * u; };
  const double got = cumulative_acceleration(eta, 2.0, rule);
  double oracle = 0;
  const int n = 2'000'000;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * i / n, b = 2.0 * (i + 1) / n;
    oracle += 0.5 * (std::exp(-eta(a)) + std::exp(-eta(b))) * (b - a);
  }
  REQUIRE(got == Catch::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("time-varying AFT survival and hazard from the acceleration factor") {
  auto e = AftFamily::exponential();
  auto w = AftFamily::weibull_aft(2.0);
  REQUIRE(aft_tve_log_survival(e, 2.0) == Catch::Approx(-2.0));
  REQUIRE(aft_tve_log_survival(w, 3.0) == Catch::Approx(-9.0));
  REQUIRE(aft_tve_log_survival(e, 0.0) == 0.0);

  REQUIRE(aft_tve_log_hazard(e, 1.3, 2.0) == Catch::Approx(-1.3));
  auto w15 = AftFamily::weibull_aft(1.5);
  const double t = 2.4;
  REQUIRE(aft_tve_log_hazard(w15, 0.0, t) ==
          Catch::Approx(std::log(1.5 * std::pow(t, 0.5))));

  // constant linear predictor: the reduction to the time-fixed forms
  const auto rule = make_rule(15);
  CounterRng rng(12, 0);
  for (int i = 0; i < 50; ++i) {
    const double eta = rng.uniform(-1.5, 1.5);
    const double tt = rng.uniform(0.1, 5.0);
    const double a = cumulative_acceleration([&](double) { return eta; }, tt, rule);
    REQUIRE(aft_tve_log_survival(w, a) ==
            Catch::Approx(aft_log_survival(w, tt, eta)).margin(1e-10));
    REQUIRE(aft_tve_log_hazard(w, eta, a) ==
            Catch::Approx(aft_log_hazard(w, tt, eta)).margin(1e-10));
  }

  // genuinely time-varying eta: fine-grid oracle for survival and hazard
  auto eta_fn = [](double u) { return -0.4 + 0.3 * u; };
  const double T = 2.0;
  double accel = 0;
  const int n = 2'000'000;
  for (int i = 0; i < n; ++i) {
    const double a = T * i / n, b = T * (i + 1) / n;
    accel += 0.5 * (std::exp(-eta_fn(a)) + std::exp(-eta_fn(b))) * (b - a);
  }
  const double a_quad = cumulative_acceleration(eta_fn, T, rule);
  REQUIRE(a_quad == Catch::Approx(accel).epsilon(1e-8));
  REQUIRE(aft_tve_log_hazard(w, eta_fn(T), a_quad) ==
          Catch::Approx(-eta_fn(T) + std::log(2.0) + std::log(accel)).epsilon(1e-7));
}

TEST_CASE("PH<->AFT coefficient mapping") {
  REQUIRE(ph_to_aft_coefficients(Baseline::Exponential, {0.3})[0] ==
          Catch::Approx(-0.3));
  REQUIRE(ph_to_aft_coefficients(Baseline::Weibull, {-1.0}, 2.0)[0] ==
          Catch::Approx(0.5));
  // round trip is the identity
  CounterRng rng(14, 0);
  for (int i = 0; i < 20; ++i) {
    const double beta = rng.uniform(-2.0, 2.0);
    const double gamma = rng.uniform(0.3, 3.0);
    auto aft = ph_to_aft_coefficients(Baseline::Weibull, {beta}, gamma);
    auto back = aft_to_ph_coefficients(Baseline::Weibull, aft, gamma);
    REQUIRE(back[0] == Catch::Approx(beta).margin(1e-14));
  }
  REQUIRE_THROWS_AS(ph_to_aft_coefficients(Baseline::Gompertz, {0.1}),
                    UnsupportedFamily);
  // survival time ratio is the reciprocal of the acceleration factor
  const double bstar = 0.8;
  REQUIRE(std::exp(bstar) * std::exp(-bstar) == Catch::Approx(1.0));
}

TEST_CASE("exponential AFT with eta matches exponential PH with -eta") {
  auto e = AftFamily::exponential();
  auto ph = HazardFamily::exponential();
  CounterRng rng(15, 0);
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform(0.01, 8.0);
    const double eta = rng.uniform(-2.0, 2.0);
    REQUIRE(aft_log_survival(e, t, eta) ==
            Catch::Approx(log_survival(ph, t, -eta)).margin(1e-12));
  }
}
