#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stula/taming.hpp"

using namespace stula;
using Catch::Approx;

TEST_CASE("tamed drift closed-form values", "[taming]") {
  auto dw = double_well();
  REQUIRE(tamed_drift(dw, 0.5, std::vector{0.0})[0] == 0.0);
  REQUIRE(tamed_drift(dw, 1e-8, std::vector{0.0})[0] == 0.0);

  // a=1, l=1.5, lambda=0.01, x=2: 2 + f(2)/(1+0.1*8) with f(2)=h(2)-2=4.
  const double v = tamed_drift(dw, 0.01, std::vector{2.0})[0];
  REQUIRE(v == Approx(2.0 + 4.0 / 1.8).epsilon(1e-15));

  REQUIRE_THROWS_AS(tamed_drift(dw, 0.0, std::vector{1.0}), InvalidParameter);
  REQUIRE_THROWS_AS(tamed_drift(example1(), 0.1, std::vector{1.0, 1.0}),
                    MissingMetadata);
}

TEST_CASE("matched linear part passes through untamed", "[taming]") {
  // For u = |x|^2/2 with a = 1 the remainder f = h - ax is exactly zero, so
  // h_lambda must equal h bit for bit, at every stepsize.
  auto q = quadratic(2);
  RngStream rng(41, 0);
  for (int i = 0; i < 10000; ++i) {
    Vec x{20.0 * (rng.next_unit() - 0.5), 20.0 * (rng.next_unit() - 0.5)};
    for (double lam : {1.0, 0.01, 1e-6}) {
      Vec hl = tamed_drift(q, lam, x);
      Vec h(2);
      q.h(x, h);
      REQUIRE(hl[0] == h[0]);
      REQUIRE(hl[1] == h[1]);
    }
  }
}

TEST_CASE("stepsize cap", "[taming]") {
  REQUIRE(lambda_max(double_well()) == Approx(0.0025));  // min{1, 1/400, 1/4}
  REQUIRE(lambda_max(quadratic(1)) == Approx(1.0 / 144.0));

  PotentialSpec p = quadratic(1);
  p.growth.L = 0.5;
  p.dissipativity = DissipativityPair{0.5, 0.0};
  REQUIRE(lambda_max(p) == Approx(1.0 / 36.0));  // 2a+4L = 3

  p.growth.L = 0.05;
  p.dissipativity = DissipativityPair{0.05, 0.0};
  REQUIRE(lambda_max(p) == 1.0);  // cap binds at 1

  REQUIRE_THROWS_AS(lambda_max(example1()), MissingMetadata);
}

TEST_CASE("single steps", "[taming]") {
  auto dw = double_well();
  Vec zero{0.0};

  // stula from x=2, beta=1, lambda=0.01, no noise: 2 - 0.01*(2 + 4/1.8).
  Vec s = step(Scheme::stula, dw, 1.0, 0.01, std::vector{2.0}, zero);
  REQUIRE(s[0] == Approx(2.0 - 0.01 * (2.0 + 4.0 / 1.8)).epsilon(1e-15));

  // ula, quadratic: (1-lambda)x.
  Vec su = step(Scheme::ula, quadratic(1), 1.0, 0.1, std::vector{1.0}, zero);
  REQUIRE(su[0] == Approx(0.9));

  // Critical points with no noise stay put: ula/tula anywhere h=0,
  // stula at the origin (where both h and x vanish).
  for (auto sch : {Scheme::ula, Scheme::tula})
    REQUIRE(step(sch, dw, 1.0, 0.01, std::vector{1.0}, zero)[0] == 1.0);
  REQUIRE(step(Scheme::stula, dw, 1.0, 0.01, std::vector{0.0}, zero)[0] == 0.0);

  REQUIRE_THROWS_AS(step(Scheme::ula, dw, -1.0, 0.1, std::vector{1.0}, zero),
                    InvalidParameter);
}

namespace {

// Shared by the three drift-inequality property suites.
void for_sampled_points(const PotentialSpec& p, long n, double radius,
                        std::uint64_t seed,
                        const std::function<void(const Vec&)>& fn) {
  RngStream rng(seed, 9);
  for (long i = 0; i < n; ++i) fn(detail::ball_point(rng, p.dim, radius));
}

}  // namespace

TEST_CASE("taming perturbs the drift by at most sqrt(lambda)|x|^{2l}(|h|+a|x|)",
          "[taming][slow]") {
  for (const auto& p : {quadratic(2), double_well(), example2(),
                        example2_xmarginal()}) {
    const double lmax = lambda_max(p);
    const double a = p.dissipativity->a;
    Vec h(p.dim);
    for (double lam : {lmax, lmax / 10.0, lmax / 100.0}) {
      for_sampled_points(p, 30000, 10.0, 101, [&](const Vec& x) {
        p.h(x, h);
        Vec hl = tamed_drift(p, lam, x);
        double diff = 0;
        for (int j = 0; j < p.dim; ++j)
          diff += (hl[j] - h[j]) * (hl[j] - h[j]);
        diff = std::sqrt(diff);
        const double nx = norm2(x);
        const double bound = std::sqrt(lam) * (norm2(h) + a * nx) *
                             pow_abs(nx, 2.0 * p.growth.l);
        REQUIRE(bound - diff >= -1e-9);
      });
    }
  }
}

TEST_CASE("taming preserves half the dissipativity", "[taming][slow]") {
  for (const auto& p : {quadratic(2), double_well(), example2(),
                        example2_xmarginal()}) {
    const double lmax = lambda_max(p);
    const auto [a, b] = *p.dissipativity;
    for (double lam : {lmax, lmax / 10.0, lmax / 100.0}) {
      for_sampled_points(p, 30000, 10.0, 103, [&](const Vec& x) {
        Vec hl = tamed_drift(p, lam, x);
        double dot = 0, xx = 0;
        for (int j = 0; j < p.dim; ++j) {
          dot += hl[j] * x[j];
          xx += x[j] * x[j];
        }
        REQUIRE(dot - (0.5 * a * xx - b) >= -1e-9);
      });
    }
  }
}

TEST_CASE("tamed drift grows at most linearly plus C_h/sqrt(lambda)",
          "[taming][slow]") {
  for (const auto& p : {quadratic(2), double_well(), example2(),
                        example2_xmarginal()}) {
    const double lmax = lambda_max(p);
    const double a = p.dissipativity->a;
    const double C_h = p.growth.L + a;
    for (double lam : {lmax, lmax / 10.0, lmax / 100.0}) {
      for_sampled_points(p, 30000, 10.0, 107, [&](const Vec& x) {
        Vec hl = tamed_drift(p, lam, x);
        const double bound = a * norm2(x) + C_h / std::sqrt(lam);
        REQUIRE(bound - norm2(hl) >= -1e-9);
      });
    }
  }
}
