#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "stula/grid.hpp"
#include "stula/metrics.hpp"

using namespace stula;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

PotentialSpec shifted_quadratic(double c) {
  PotentialSpec p;
  p.dim = 1;
  p.id = "shifted_quadratic";
  p.u = [c](std::span<const double> x) { return 0.5 * (x[0] - c) * (x[0] - c); };
  p.h = [c](std::span<const double> x, std::span<double> out) { out[0] = x[0] - c; };
  p.growth = {1.0 + std::abs(c), 0.5};
  p.local_lipschitz = {1.0, 1.0};
  p.known_minimum = KnownMinimum{{c}, 0.0};
  return p;
}

// Uniform target on whatever box it is gridded over. No declared minimum,
// which also makes it the MissingMetadata probe for excess_risk.
PotentialSpec flat_unit() {
  PotentialSpec p;
  p.dim = 1;
  p.id = "flat";
  p.u = [](std::span<const double>) { return 0.0; };
  p.h = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  p.growth = {1.0, 0.5};
  p.local_lipschitz = {1.0, 1.0};
  return p;
}

GridDensity grid1d(const PotentialSpec& p, double beta, double lo, double hi, int n) {
  const double blo[] = {lo}, bhi[] = {hi};
  const int nc[] = {n};
  return grid_reference(p, beta, blo, bhi, nc);
}

// Hand-built uniform law on [lo, hi]. grid_reference refuses flat targets
// (their tails never decay), but the exact 1/n masses make clean oracles.
GridDensity uniform_grid(double lo, double hi, int n) {
  GridDensity g;
  g.dim = 1;
  g.beta = 1.0;
  g.lo = {lo, 0};
  g.hi = {hi, 0};
  g.n = {n, 1};
  g.cell_mass.assign(n, 1.0 / n);
  g.log_unnorm.assign(n, 0.0);
  g.log_mass_norm = std::log(static_cast<double>(n));
  g.log_Z = std::log(hi - lo);
  return g;
}

}  // namespace

TEST_CASE("grid_reference matches the normal CDF cell by cell") {
  auto p = make_potential("quadratic");
  auto g = grid1d(p, 1.0, -8.0, 8.0, 1024);

  REQUIRE(g.cell_mass.size() == 1024);
  const double h = g.spacing(0);
  CHECK(h == Approx(16.0 / 1024).epsilon(1e-15));
  double worst = 0;
  for (int i = 0; i < 1024; ++i) {
    const double a = -8.0 + i * h, b = a + h;
    worst = std::max(worst, std::abs(g.cell_mass[i] - (Phi(b) - Phi(a))));
  }
  CHECK(worst <= 1e-6);

  // Midpoint quadrature of exp(-x^2/2) over [-8,8] nails log sqrt(2*pi).
  CHECK(g.log_Z == Approx(0.5 * std::log(2 * std::numbers::pi)).margin(1e-9));

  const double total = std::accumulate(g.cell_mass.begin(), g.cell_mass.end(), 0.0);
  CHECK(total == Approx(1.0).margin(1e-12));
}

TEST_CASE("grid_reference refuses flat targets whose tails never decay") {
  CHECK_THROWS_AS(grid1d(flat_unit(), 1.0, 0.0, 1.0, 64), BoxTooSmall);
}

TEST_CASE("2-D product target factorizes into its marginals") {
  auto p2 = make_potential("quadratic", 2);
  const double lo[] = {-8.0, -8.0}, hi[] = {8.0, 8.0};
  const int nc[] = {64, 64};
  auto g2 = grid_reference(p2, 1.0, lo, hi, nc);
  auto g1 = grid1d(make_potential("quadratic"), 1.0, -8.0, 8.0, 64);

  for (int i = 0; i < 64; ++i) {
    double row = 0;
    for (int j = 0; j < 64; ++j) row += g2.cell_mass[g2.index(i, j)];
    REQUIRE(row == Approx(g1.cell_mass[i]).margin(1e-10));
  }
}

TEST_CASE("grid_reference rejects bad boxes and parameters") {
  auto p = make_potential("double_well");
  CHECK_THROWS_AS(grid1d(p, 5.0, -0.5, 0.5, 512), BoxTooSmall);
  CHECK_THROWS_WITH(grid1d(p, 5.0, -0.5, 0.5, 512), ContainsSubstring("tail mass"));
  CHECK_THROWS_AS(grid1d(p, 1.0, -4.0, 4.0, 16), InvalidParameter);
  CHECK_THROWS_AS(grid1d(p, 1.0, 4.0, 4.0, 64), InvalidParameter);
  CHECK_THROWS_AS(grid1d(p, 0.0, -4.0, 4.0, 64), InvalidParameter);
  CHECK_THROWS_AS(grid1d(p, -1.0, -4.0, 4.0, 64), InvalidParameter);

  const double lo2[] = {-4.0, -4.0}, hi2[] = {4.0, 4.0};
  const int nc2[] = {64, 64};
  CHECK_THROWS_AS(grid_reference(p, 1.0, lo2, hi2, nc2), InvalidInput);
}

TEST_CASE("grid quantiles track the normal quantiles") {
  auto g = grid1d(make_potential("quadratic"), 1.0, -8.0, 8.0, 1024);
  CHECK(grid_quantile(g, 0.5) == Approx(0.0).margin(g.spacing(0)));
  CHECK(grid_quantile(g, Phi(1.0)) == Approx(1.0).margin(0.01));
  CHECK(grid_quantile(g, Phi(-2.0)) == Approx(-2.0).margin(0.01));
  double prev = grid_quantile(g, 0.01);
  for (int k = 2; k <= 99; ++k) {
    const double cur = grid_quantile(g, k / 100.0);
    REQUIRE(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("sample_from_grid is deterministic and hits the right moments") {
  auto g = grid1d(make_potential("quadratic"), 1.0, -8.0, 8.0, 1024);
  auto a = sample_from_grid(g, 1000, 77);
  auto b = sample_from_grid(g, 1000, 77);
  CHECK(a == b);
  auto c = sample_from_grid(g, 1000, 78);
  CHECK(a != c);
  CHECK_THROWS_AS(sample_from_grid(g, 10, 0), InvalidParameter);

  auto big = sample_from_grid(g, 200000, 91);
  double m1 = 0, m2 = 0;
  for (double x : big) {
    REQUIRE(x >= -8.0);
    REQUIRE(x <= 8.0);
    m1 += x;
    m2 += x * x;
  }
  m1 /= big.size();
  m2 /= big.size();
  CHECK(std::abs(m1) <= 0.01);
  CHECK(m2 - m1 * m1 == Approx(1.0).margin(0.02));
}

TEST_CASE("tv between two gaussian grids matches the closed form") {
  // N(0,1) vs N(1/2,1): TV = 2*Phi(1/4) - 1 = 0.19741265...
  auto ga = grid1d(make_potential("quadratic"), 1.0, -9.0, 9.0, 1024);
  auto gb = grid1d(shifted_quadratic(0.5), 1.0, -9.0, 9.0, 1024);
  auto r = tv_distance(ga, gb);
  CHECK(r.value == Approx(2 * Phi(0.25) - 1).margin(1e-3));
  CHECK(r.metric == "tv");

  CHECK(tv_distance(ga, ga).value == 0.0);

  auto gc = grid1d(make_potential("quadratic"), 1.0, -9.0, 9.0, 512);
  CHECK_THROWS_AS(tv_distance(ga, gc), InvalidInput);
}

TEST_CASE("kl of a shifted gaussian sample against the reference is 1/2") {
  auto ref = grid1d(make_potential("quadratic"), 1.0, -9.0, 9.0, 512);
  auto src = grid1d(shifted_quadratic(1.0), 1.0, -9.0, 9.0, 512);
  auto rows = sample_from_grid(src, 1000000, 1234);
  auto hist = bin_on_grid(ref, rows, 1000000);
  auto kl = kl_divergence(hist, ref);
  // KL(N(1,1) || N(0,1)) = 1/2.
  CHECK(kl.value == Approx(0.5).margin(0.05));
  CHECK(kl.n_samples_a == 1000000);
  CHECK(kl.out_of_box == 0);

  // Pinsker with slack for the histogram bias.
  auto tv = tv_distance(hist, ref);
  CHECK(tv.value <= std::sqrt(kl.value / 2) + 0.01);
  // TV(N(1,1), N(0,1)) = 2*Phi(1/2) - 1 = 0.38292...
  CHECK(tv.value == Approx(2 * Phi(0.5) - 1).margin(5e-3));
}

TEST_CASE("kl of a point mass against the uniform law is log n") {
  auto g = uniform_grid(0.0, 1.0, 64);
  std::vector<double> rows(1000, 0.3);
  auto hist = bin_on_grid(g, rows, 1000);
  auto kl = kl_divergence(hist, g);
  CHECK(kl.value == Approx(std::log(64.0)).epsilon(1e-12));
  CHECK(kl.empty_bins == 63);
}

TEST_CASE("binning diagnostics: sparse fills, out-of-box mass, edge rule") {
  auto g = uniform_grid(0.0, 1.0, 64);

  std::vector<double> sparse(10, 0.5);
  auto hs = bin_on_grid(g, sparse, 10);
  CHECK(kl_divergence(hs, g).empty_bins == 63);

  std::vector<double> outside = {-1.0, 2.0};
  auto ho = bin_on_grid(g, outside, 2);
  CHECK(ho.out_of_box == 2);
  CHECK(std::accumulate(ho.mass.begin(), ho.mass.end(), 0.0) == 0.0);
  // Everything the histogram holds is elsewhere: total variation saturates.
  CHECK(tv_distance(ho, g).value == Approx(1.0).epsilon(1e-12));

  std::vector<double> mixed = {0.25, 0.75, 1.5};
  auto hm = bin_on_grid(g, mixed, 3);
  CHECK(hm.out_of_box == 1);
  CHECK(std::accumulate(hm.mass.begin(), hm.mass.end(), 0.0) == Approx(2.0 / 3).epsilon(1e-14));

  // The right boundary belongs to the last cell.
  std::vector<double> edge = {1.0};
  auto he = bin_on_grid(g, edge, 1);
  CHECK(he.out_of_box == 0);
  CHECK(he.mass[63] == 1.0);
}

TEST_CASE("kl estimate is stable under halving the bin count") {
  auto src = grid1d(shifted_quadratic(1.0), 1.0, -9.0, 9.0, 512);
  auto rows = sample_from_grid(src, 1000000, 555);
  auto ref512 = grid1d(make_potential("quadratic"), 1.0, -9.0, 9.0, 512);
  auto ref256 = grid1d(make_potential("quadratic"), 1.0, -9.0, 9.0, 256);
  const double k512 = kl_divergence(bin_on_grid(ref512, rows, 1000000), ref512).value;
  const double k256 = kl_divergence(bin_on_grid(ref256, rows, 1000000), ref256).value;
  CHECK(std::abs(k512 - k256) / k512 < 0.20);
}

TEST_CASE("w2_1d on closed-form pairs") {
  std::vector<double> a = {0.3, -1.2, 2.0, 0.7, -0.4};
  CHECK(w2_1d(a, a).value == 0.0);

  std::vector<double> b = a;
  for (auto& v : b) v += 1.75;
  CHECK(w2_1d(a, b).value == Approx(1.75).epsilon(1e-12));
  // Symmetry is exact: same squared differences in the same order.
  CHECK(w2_1d(a, b).value == w2_1d(b, a).value);

  std::vector<double> tooshort = {1.0};
  CHECK_THROWS_AS(w2_1d(tooshort, tooshort), InvalidInput);
  std::vector<double> unequal = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(w2_1d(a, unequal), InvalidInput);
}

TEST_CASE("w2_1d separates N(0,1) from N(0,4) by the scale gap") {
  // W2(N(0,1), N(0,4)) = |1 - 2| = 1.
  auto g1 = grid1d(make_potential("quadratic"), 1.0, -16.0, 16.0, 2048);
  auto g4 = grid1d(quadratic(1, 0.25), 1.0, -16.0, 16.0, 2048);
  auto sa = sample_from_grid(g1, 100000, 31);
  auto sb = sample_from_grid(g4, 100000, 32);
  CHECK(w2_1d(sa, sb).value == Approx(1.0).epsilon(0.02));

  // Against the grid law directly.
  CHECK(w2_1d(sa, g1).value <= 0.02);
  CHECK(w2_1d(sb, g4).value <= 0.03);
  std::vector<double> shifted = sa;
  for (auto& v : shifted) v += 3.0;
  CHECK(w2_1d(shifted, g1).value == Approx(3.0).margin(0.03));

  auto p2 = make_potential("quadratic", 2);
  const double lo2[] = {-8.0, -8.0}, hi2[] = {8.0, 8.0};
  const int nc2[] = {64, 64};
  auto g2d = grid_reference(p2, 1.0, lo2, hi2, nc2);
  CHECK_THROWS_AS(w2_1d(sa, g2d), InvalidParameter);
}

TEST_CASE("w2_1d obeys the triangle inequality on sample triples") {
  RngStream rng(2024, 0);
  std::vector<double> a(500), b(500), c(500);
  for (int i = 0; i < 500; ++i) {
    a[i] = rng.next_gaussian();
    b[i] = 1.0 + rng.next_gaussian();
    c[i] = 2.0 * rng.next_gaussian() - 0.5;
  }
  const double ab = w2_1d(a, b).value;
  const double bc = w2_1d(b, c).value;
  const double ac = w2_1d(a, c).value;
  CHECK(ac <= ab + bc + 1e-12);
}

TEST_CASE("sliced w2 recovers translations up to the direction average") {
  RngStream rng(99, 7);
  const int n = 4000, d = 2;
  std::vector<double> a(n * d), b(n * d);
  const double shift[] = {0.6, -0.8};  // |v| = 1
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      a[i * d + j] = rng.next_gaussian();
      b[i * d + j] = a[i * d + j] + shift[j];
    }
  CHECK(sliced_w2(a, a, d, 256, 5).value == 0.0);
  auto r = sliced_w2(a, b, d, 256, 5);
  // Root-mean-square of |<dir, v>| over unit directions is |v|/sqrt(2) in 2-D.
  CHECK(r.value == Approx(1.0 / std::numbers::sqrt2).epsilon(0.10));
  CHECK(r.n_projections == 256);
  // Same seed, swapped arguments: identical projections, identical value.
  CHECK(sliced_w2(b, a, d, 256, 5).value == r.value);

  CHECK_THROWS_AS(sliced_w2(a, b, 1, 256, 5), InvalidParameter);
  CHECK_THROWS_AS(sliced_w2(a, b, d, 4, 5), InvalidParameter);
  CHECK_THROWS_AS(sliced_w2(a, b, d, 256, 0), InvalidParameter);
  std::vector<double> small(2 * d, 0.0);
  CHECK_THROWS_AS(sliced_w2(a, small, d, 256, 5), InvalidInput);
}

TEST_CASE("excess risk is mean energy above the known minimum") {
  auto p = make_potential("quadratic");
  std::vector<double> at_min = {0.0};
  CHECK(excess_risk(at_min, 1, p).value == 0.0);

  // At beta = 10 the target is N(0, 1/10) and E[x^2/2] = 1/20.
  auto g = grid1d(p, 10.0, -4.0, 4.0, 1024);
  CHECK(excess_risk_quadrature(g, p) == Approx(0.05).margin(5e-4));
  auto rows = sample_from_grid(g, 100000, 44);
  CHECK(excess_risk(rows, 100000, p).value == Approx(0.05).epsilon(0.10));

  auto dw = make_potential("double_well");
  auto gdw = grid1d(dw, 10.0, -2.5, 2.5, 512);
  const double er = excess_risk_quadrature(gdw, dw);
  CHECK(er > 0.0);
  CHECK(er < 0.2);

  CHECK_THROWS_AS(excess_risk(at_min, 1, flat_unit()), MissingMetadata);
  CHECK_THROWS_AS(excess_risk(std::span<const double>(at_min.data(), 0), 0, p),
                  InvalidInput);
}
