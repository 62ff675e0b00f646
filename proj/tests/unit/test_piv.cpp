#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "sppiv/error.hpp"
#include "sppiv/metrics.hpp"
#include "sppiv/piv.hpp"
#include "sppiv/synth.hpp"
#include "test_util.hpp"

using namespace sppiv;

namespace {

std::vector<double> random_block(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<double> b(static_cast<std::size_t>(n * n));
  for (auto& x : b) x = u(rng);
  return b;
}

std::vector<double> circular_shift(const std::vector<double>& a, int n, int sx, int sy) {
  std::vector<double> b(a.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      b[static_cast<std::size_t>(((y + sy) % n + n) % n * n + ((x + sx) % n + n) % n)] =
          a[static_cast<std::size_t>(y * n + x)];
  return b;
}

// Uniform-shift pair rendered from a seeded particle ensemble.
ImagePair uniform_pair(double shift_px, std::uint64_t seed, int w = 256, int h = 128) {
  FlowSpec spec;
  spec.kind = FlowKind::Uniform;
  RenderConfig rc;
  rc.width = w;
  rc.height = h;
  const double dt = 80e-6;
  spec.U_inf = shift_px / (rc.px_per_length * dt);
  const AnalyticFlow flow(spec);
  const ParticleEnsemble ens = seed_particles(rc, seed);
  return advect_and_render(flow, ens, 0.0, dt, rc, seed + 100);
}

}  // namespace

TEST_CASE("FFT correlation equals the direct sum on 8x8 blocks") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto a = random_block(8, seed), b = random_block(8, seed + 50);
    const auto fft = cross_correlate(a, b, 8);
    const auto brute = testutil::brute_correlation(a, b, 8);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < fft.size(); ++i) {
      worst = std::max(worst, std::abs(fft[i] - brute[i]));
      scale = std::max(scale, std::abs(brute[i]));
    }
    CHECK(worst < 1e-8 * std::max(1.0, scale));
  }
}

TEST_CASE("autocorrelation peaks at zero and a circular shift moves the peak") {
  const int n = 16;
  const auto a = random_block(n, 3);
  const auto auto_map = cross_correlate(a, a, n);
  const auto it = std::max_element(auto_map.begin(), auto_map.end());
  CHECK(it - auto_map.begin() == (n / 2) * n + n / 2);

  const auto b = circular_shift(a, n, 3, -2);
  const auto map = cross_correlate(a, b, n);
  const int idx = static_cast<int>(std::max_element(map.begin(), map.end()) - map.begin());
  CHECK(idx % n - n / 2 == 3);
  CHECK(idx / n - n / 2 == -2);
}

TEST_CASE("blank windows are rejected") {
  const std::vector<double> flat(64, 5.0);
  CrossCorrelator xc(8);
  CHECK_FALSE(xc.load(flat.data(), random_block(8, 1).data()));
  CHECK_THROWS_AS(cross_correlate(flat, flat, 8), Error);
  CHECK_THROWS_AS(CrossCorrelator(12), Error);
  CHECK_THROWS_AS(cross_correlate(flat, std::vector<double>(10), 8), Error);
}

TEST_CASE("sub-pixel peak") {
  const int n = 16;
  SUBCASE("symmetric neighbours give no offset") {
    std::vector<double> m(static_cast<std::size_t>(n * n), 0.1);
    m[8 * n + 8] = 1.0;
    m[8 * n + 7] = m[8 * n + 9] = 0.5;
    m[7 * n + 8] = m[9 * n + 8] = 0.5;
    const PeakEstimate e = subpixel_peak(m, n, n / 2);
    CHECK(e.dx == 0.0);
    CHECK(e.dy == 0.0);
    CHECK(e.valid());
  }
  SUBCASE("sampled Gaussian recovers its centre") {
    for (double cx : {0.3, -0.42, 0.05}) {
      std::vector<double> m(static_cast<std::size_t>(n * n));
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double dx = x - (10 + cx), dy = y - (6 - 0.2);
          m[static_cast<std::size_t>(y * n + x)] = std::exp(-(dx * dx + dy * dy) / 3.0);
        }
      const PeakEstimate e = subpixel_peak(m, n, n / 2);
      CHECK(e.dx == doctest::Approx(2 + cx).epsilon(1e-3 / std::abs(2 + cx)));
      CHECK(e.dy == doctest::Approx(-2.2).epsilon(1e-3 / 2.2));
    }
  }
  SUBCASE("non-positive neighbour falls back to a parabola") {
    std::vector<double> m(static_cast<std::size_t>(n * n), 0.0);
    m[8 * n + 8] = 1.0;
    m[8 * n + 7] = -0.2;
    m[8 * n + 9] = 0.4;
    m[7 * n + 8] = m[9 * n + 8] = 0.3;
    const PeakEstimate e = subpixel_peak(m, n, n / 2);
    CHECK((e.flags & kParabolicFallback) != 0);
    CHECK(e.dx == doctest::Approx((-0.2 - 0.4) / (2.0 * (-0.2 - 2.0 + 0.4))));
  }
  SUBCASE("border peak and clamp") {
    std::vector<double> m(static_cast<std::size_t>(n * n), 0.0);
    m[0 * n + 5] = 1.0;
    CHECK((subpixel_peak(m, n, n / 2).flags & kBorderPeak) != 0);
    std::vector<double> c(static_cast<std::size_t>(n * n), 0.1);
    c[8 * n + 14] = 1.0;
    const PeakEstimate e = subpixel_peak(c, n, 4);
    CHECK((e.flags & kOutsideClamp) != 0);
    CHECK_FALSE(e.valid());
  }
}

TEST_CASE("layout arithmetic") {
  PivConfig cfg{32, 0.75, 1.0, 0, 0, 0};
  const WindowLayout l = make_layout(512, 256, cfg);
  CHECK(l.stride == 8);
  CHECK(l.nx == (512 - 32) / 8 + 1);
  CHECK(l.ny == (256 - 32) / 8 + 1);
  CHECK(l.nx == 61);
  CHECK(l.ny == 29);
  PivConfig m{32, 0.5, 1.0, 0, 10, 4};
  const WindowLayout lm = make_layout(100, 60, m);
  CHECK(lm.stride == 16);
  CHECK(lm.nx == (100 - 20 - 32) / 16 + 1);
  CHECK(lm.origin_x(1) == 26);
  PivConfig bad{24, 0.75, 1.0, 0, 0, 0};
  CHECK_THROWS_AS(make_layout(100, 100, bad), Error);
  PivConfig bad2{32, 1.0, 1.0, 0, 0, 0};
  CHECK_THROWS_AS(make_layout(100, 100, bad2), Error);
  CHECK_THROWS_AS(make_layout(20, 100, cfg), Error);
}

TEST_CASE("uniform shift is recovered across the frame") {
  const double shift = 3.25;
  const ImagePair pair = uniform_pair(shift, 7);
  PivConfig cfg{32, 0.75, 6250.0, 0, 0, 0};
  const WindowLayout l = make_layout(pair.a.width, pair.a.height, cfg);
  const GridPtr g = make_grid(l);
  const FullPivResult res = full_piv(pair, g, l, cfg);
  const double to_px = cfg.px_per_length * pair.dt_pair;
  double bias = 0.0, sq = 0.0;
  const int n = g->n_active();
  for (int a = 0; a < n; ++a) {
    const double ex = res.field.u[a] * to_px - shift, ey = res.field.v[a] * to_px;
    bias += ex;
    sq += ex * ex + ey * ey;
    // Single windows lose particles at the edges; no outliers though.
    CHECK(std::abs(ex) < 0.3);
  }
  CHECK(std::abs(bias / n) < 0.05);
  CHECK(std::sqrt(sq / n) < 0.1);
  CHECK(res.invalid == 0);
}

TEST_CASE("zero displacement gives a zero observation") {
  const ImagePair pair = uniform_pair(0.0, 3);
  PivConfig cfg{32, 0.75, 6250.0, 0, 0, 0};
  const WindowLayout l = make_layout(pair.a.width, pair.a.height, cfg);
  const GridPtr g = make_grid(l);
  SparsePiv sp(cfg, l, *g, {5, 40, 100});
  const Eigen::VectorXd y = sp.process(pair);
  CHECK(y.cwiseAbs().maxCoeff() * cfg.px_per_length * pair.dt_pair < 0.05);
}

TEST_CASE("sparse and full paths agree window by window") {
  const ImagePair pair = uniform_pair(2.1, 11);
  PivConfig cfg{32, 0.75, 6250.0, 0, 0, 0};
  const WindowLayout l = make_layout(pair.a.width, pair.a.height, cfg);
  std::vector<bool> mask(static_cast<std::size_t>(l.nx * l.ny), false);
  mask[3] = mask[50] = true;
  const GridPtr g = make_grid(l, mask);
  const FullPivResult full = full_piv(pair, g, l, cfg);
  const std::vector<int> cells{200, 4, 77, 51, 120};
  SparsePiv sp(cfg, l, *g, cells);
  CHECK(sp.points() == 5);
  const Eigen::VectorXd y = sp.process(pair);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const int a = g->active_of(cells[k]);
    CHECK(std::abs(y[2 * static_cast<Eigen::Index>(k)] - full.field.u[a]) <= 1e-10 * std::abs(full.field.u[a]));
    CHECK(std::abs(y[2 * static_cast<Eigen::Index>(k) + 1] - full.field.v[a]) <= 1e-10);
  }

  // One point with a known shift.
  SparsePiv one(cfg, l, *g, {100});
  const Eigen::VectorXd y1 = one.process(pair);
  CHECK(y1[0] * cfg.px_per_length * pair.dt_pair == doctest::Approx(2.1).epsilon(0.1 / 2.1));
  CHECK(std::abs(y1[1] * cfg.px_per_length * pair.dt_pair) < 0.1);

  // Through the sensor-set wrapper, with masked or out-of-range cells rejected.
  CHECK_THROWS_AS(SparsePiv(cfg, l, *g, {3}), Error);
}

TEST_CASE("invalid vectors hold the last valid value") {
  ImagePair pair = uniform_pair(1.5, 5, 64, 64);
  PivConfig cfg{32, 0.5, 6250.0, 0, 0, 0};
  const WindowLayout l = make_layout(64, 64, cfg);
  const GridPtr g = make_grid(l);
  SparsePiv sp(cfg, l, *g, {0, 8});
  const Eigen::VectorXd first = sp.process(pair);
  CHECK(sp.invalid_count() == 0);

  // Blank out the top-left window in both frames.
  ImagePair blanked = pair;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) blanked.a.at(x, y) = blanked.b.at(x, y) = 100.0f;
  const Eigen::VectorXd second = sp.process(blanked);
  CHECK(sp.invalid_count() == 1);
  CHECK((sp.flags()[0] & kSubstituted) != 0);
  CHECK(second[0] == first[0]);
  CHECK(second[1] == first[1]);

  // Every window blank: step error.
  ImagePair flat = pair;
  std::fill(flat.a.pixels.begin(), flat.a.pixels.end(), 100.0f);
  std::fill(flat.b.pixels.begin(), flat.b.pixels.end(), 100.0f);
  CHECK_THROWS_AS(sp.process(flat), Error);
}

TEST_CASE("full-field PIV of a rigid rotation has a uniform curl sign") {
  RenderConfig rc;
  rc.width = 192;
  rc.height = 192;
  rc.px_per_length = 1.0;  // work in pixels
  ParticleEnsemble ens = seed_particles(rc, 21);
  const double omega = 0.02;  // rad per pair
  const double cx = 96.0, cy = 96.0;
  ImagePair pair{ParticleImage(192, 192), ParticleImage(192, 192), 1.0};
  render_particles(pair.a, ens.particles, 1.0);
  std::vector<Particle> moved = ens.particles;
  for (auto& p : moved) {
    const double dx = p.x - cx, dy = p.y - cy;
    p.x = cx + std::cos(omega) * dx - std::sin(omega) * dy;
    p.y = cy + std::sin(omega) * dx + std::cos(omega) * dy;
  }
  render_particles(pair.b, moved, 1.0);
  PivConfig cfg{32, 0.5, 1.0, 0, 0, 0};
  const WindowLayout l = make_layout(192, 192, cfg);
  const GridPtr g = make_grid(l);
  const FullPivResult res = full_piv(pair, g, l, cfg);
  int positive = 0, total = 0;
  for (int iy = 0; iy + 1 < l.ny; ++iy) {
    for (int ix = 0; ix + 1 < l.nx; ++ix) {
      auto at = [&](int x, int y) { return g->active_of(y * l.nx + x); };
      const double dvdx = (res.field.v[at(ix + 1, iy)] - res.field.v[at(ix, iy)]) / l.stride;
      const double dudy = (res.field.u[at(ix, iy + 1)] - res.field.u[at(ix, iy)]) / l.stride;
      ++total;
      if (dvdx - dudy > 0.0) ++positive;
    }
  }
  CHECK(positive == total);
}

TEST_CASE("sparse cost depends on the point count, not the grid size") {
  const ImagePair small = uniform_pair(2.0, 2, 128, 128);
  const ImagePair large = uniform_pair(2.0, 2, 512, 512);
  PivConfig cfg{32, 0.75, 6250.0, 0, 0, 0};
  const WindowLayout ls = make_layout(128, 128, cfg), ll = make_layout(512, 512, cfg);
  const GridPtr gs = make_grid(ls), gl = make_grid(ll);
  const std::vector<int> cells{0, 5, 30, 60};
  SparsePiv a(cfg, ls, *gs, cells), b(cfg, ll, *gl, cells);
  auto time = [](SparsePiv& sp, const ImagePair& p) {
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int k = 0; k < 50; ++k) sp.process(p);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double ts = time(a, small), tl = time(b, large);
  // 16x more pixels and vectors, same work.
  CHECK(tl < 3.0 * ts);
}

TEST_CASE("PGM round trip") {
  ParticleImage img(7, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 7; ++x) img.at(x, y) = static_cast<float>(x * 1000 + y * 7);
  img.at(0, 0) = 70000.0f;  // clamps
  img.at(1, 0) = -5.0f;
  const auto path = std::filesystem::temp_directory_path() / "sppiv_test_roundtrip.pgm";
  write_pgm(path, img);
  const ParticleImage back = read_pgm(path);
  std::filesystem::remove(path);
  CHECK(back.width == 7);
  CHECK(back.height == 3);
  CHECK(back.at(0, 0) == 65535.0f);
  CHECK(back.at(1, 0) == 0.0f);
  CHECK(back.at(3, 2) == img.at(3, 2));
  CHECK_THROWS_AS(read_pgm("/nonexistent/image.pgm"), Error);
}
