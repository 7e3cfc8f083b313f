#include <doctest.h>

#include <complex>
#include <random>

#include "diffeo/relax.hpp"
#include "support.hpp"

using namespace diffeo;
using diffeo::testing::band_limited_vector;

namespace {

VelocityPath random_path(const Grid& g, int n_time, double amplitude, std::uint64_t seed) {
  VelocityPath u(g, n_time);
  for (int k = 0; k <= n_time; ++k) u.frame(k) = band_limited_vector(g, 2, seed + 13 * k, amplitude);
  return u;
}

/// <u, L u> on a square 2-d grid through an explicit DFT matrix.
double dense_L_norm2(const KernelSpec& spec, const VectorField& u) {
  const Grid& g = u.grid;
  const int n = g.extent[0];
  const double len = g.length(0);
  Eigen::MatrixXcd W(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) W(j, k) = std::polar(1.0, -2 * M_PI * double(j) * k / n);
  double acc = 0;
  for (int a = 0; a < g.dim; ++a) {
    Eigen::MatrixXcd f(n, n);
    for (int i0 = 0; i0 < n; ++i0)
      for (int i1 = 0; i1 < n; ++i1) f(i0, i1) = u.values(Index(i0) * n + i1, a);
    const Eigen::MatrixXcd F = W * f * W.transpose();
    for (int m0 = 0; m0 < n; ++m0)
      for (int m1 = 0; m1 < n; ++m1) {
        const double k0 = 2 * M_PI * (m0 < n / 2 ? m0 : m0 - n) / len;
        const double k1 = 2 * M_PI * (m1 < n / 2 ? m1 : m1 - n) / len;
        acc += std::norm(F(m0, m1)) / spec.symbol(k0 * k0 + k1 * k1);
      }
  }
  // Parseval: sum_i f_i conj(g_i) = (1/N) sum_m F_m conj(G_m)
  return acc * g.cell_volume() / double(g.size());
}

struct Run {
  RelaxState state;
  double perpendicular_fraction = 0;
  double norm_drift = 0;
};

/// Relaxes the translated blob on n^2 and measures the critical-point
/// structure of the result.
Run relax_blob(int n, int iters) {
  const auto pair = diffeo::testing::blob_pair(n, 3.0 * n / 64, 5.0 * n / 64);
  const Grid& g = pair.grid;
  const auto spec = KernelSpec::gaussian(0.125, 2);
  MatchConfig cfg;
  cfg.n_time = 8;
  cfg.max_iters = iters;
  Run r;
  r.state = optimize(pair.moving, pair.fixed, cfg, spec);
  const GridKernel K(spec, g);
  const auto norms = frame_norms(r.state.u, K);
  const auto [lo, hi] = std::minmax_element(norms.begin(), norms.end());
  r.norm_drift = (*hi - *lo) / *hi;

  // L2 share of L u_t orthogonal to grad(I0 o phi_t^-1), where the gradient
  // exceeds 1% of its maximum
  double perp2 = 0, tot2 = 0;
  for (int k = 0; k <= cfg.n_time; ++k) {
    const Image It = deform_image(pair.moving, integrate_flow(r.state.u, r.state.u.time(k), 0));
    const VectorField gr = image_gradient(It);
    const VectorField m = K.apply_L(r.state.u.frame(k));
    const double gmax = gr.values.rowwise().norm().maxCoeff();
    for (Index i = 0; i < g.size(); ++i) {
      const double gn = gr.values.row(i).norm();
      if (gn < 0.01 * gmax) continue;
      const double c = (m.values(i, 0) * gr.values(i, 1) - m.values(i, 1) * gr.values(i, 0)) / gn;
      perp2 += c * c;
      tot2 += m.values.row(i).squaredNorm();
    }
  }
  r.perpendicular_fraction = std::sqrt(perp2 / tot2);
  return r;
}

}  // namespace

TEST_CASE("energy terms") {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  const auto spec = KernelSpec::sobolev(0.05, 3, 2);
  MatchConfig cfg;
  cfg.n_time = 4;
  const VelocityPath zero(pair.grid, 4);
  const double m = l2_mismatch(pair.moving, pair.fixed) / (2 * cfg.sigma2);
  const auto e0 = energy(zero, pair.moving, pair.fixed, spec, cfg);
  CHECK(e0.kinetic == 0.0);
  CHECK(e0.mismatch == doctest::Approx(m).epsilon(1e-14));
  CHECK(e0.total == doctest::Approx(m).epsilon(1e-14));
  const auto same = energy(zero, pair.moving, pair.moving, spec, cfg);
  CHECK(same.total == 0.0);

  const VelocityPath u = random_path(pair.grid, 4, 0.01, 3);
  double oracle = 0;
  for (int k = 0; k <= 4; ++k) oracle += (k == 0 || k == 4 ? 0.125 : 0.25) * dense_L_norm2(spec, u.frame(k));
  oracle *= 0.5;
  CHECK(std::abs(energy(u, pair.moving, pair.fixed, spec, cfg).kinetic - oracle) / oracle <= 1e-6);
}

TEST_CASE("trapezoid weights") {
  for (int n : {2, 5, 16}) {
    double s = 0;
    for (int k = 0; k <= n; ++k) s += trapezoid_weight(k, n);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(trapezoid_weight(0, n) == doctest::Approx(0.5 / n));
  }
}

TEST_CASE("gradient in trivial configurations") {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  const auto spec = KernelSpec::gaussian(0.125, 2);
  MatchConfig cfg;
  cfg.n_time = 4;
  const VelocityPath zero(pair.grid, 4);
  const auto g0 = energy_gradient(zero, pair.moving, pair.moving, spec, cfg);
  for (int k = 0; k <= 4; ++k) CHECK(g0.frame(k).values.norm() == 0.0);

  Image flat(pair.grid);
  flat.values.setConstant(0.3);
  Image flat2 = flat;
  flat2.values.setConstant(0.7);
  const VelocityPath u = random_path(pair.grid, 4, 0.01, 5);
  const auto gu = energy_gradient(u, flat, flat2, spec, cfg);
  for (int k = 0; k <= 4; ++k)
    CHECK((gu.frame(k).values - u.frame(k).values).cwiseAbs().maxCoeff() <=
          1e-12 * u.frame(k).values.cwiseAbs().maxCoeff());
}

TEST_CASE("gradient matches central differences in 10 random directions") {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  const auto spec = KernelSpec::gaussian(0.125, 2);
  MatchConfig cfg;
  cfg.n_time = 8;
  const RelaxProblem problem(pair.moving, pair.fixed, spec, cfg);
  const VelocityPath u = random_path(pair.grid, 8, 0.01, 7);
  const VelocityPath grad = problem.gradient(u);
  const double eps = 1e-6;
  for (int r = 0; r < 10; ++r) {
    const VelocityPath du = random_path(pair.grid, 8, 1.0, 100 + 17 * r);
    const double an = path_inner(grad, du, problem.kernel());
    const double ep = problem.evaluate(u + eps * du).energy.total;
    const double em = problem.evaluate(u - eps * du).energy.total;
    const double fd = (ep - em) / (2 * eps);
    CAPTURE(r);
    CHECK(std::abs(fd - an) / std::abs(fd) <= 1e-4);
  }
}

TEST_CASE("Eulerian gradient converges to the exact one under refinement") {
  double prev = 0;
  for (int n : {32, 64}) {
    const auto pair = diffeo::testing::blob_pair(n, 3.0 * n / 64, 5.0 * n / 64);
    const auto spec = KernelSpec::gaussian(0.125, 2);
    MatchConfig cfg;
    cfg.n_time = 4;
    const VelocityPath zero(pair.grid, 4);
    const auto ex = energy_gradient(zero, pair.moving, pair.fixed, spec, cfg);
    const auto eu = energy_gradient_eulerian(zero, pair.moving, pair.fixed, spec, cfg);
    const GridKernel K(spec, pair.grid);
    const VelocityPath diff = eu - ex;
    const double rel = std::sqrt(path_inner(diff, diff, K) / path_inner(ex, ex, K));
    CAPTURE(n);
    CAPTURE(rel);
    if (n == 64) {
      CHECK(rel <= 0.1);
      CHECK(prev / rel >= 1.8);
    }
    prev = rel;
  }
}

TEST_CASE("matched images need no deformation") {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  MatchConfig cfg;
  cfg.n_time = 4;
  const auto st = optimize(pair.moving, pair.moving, cfg, KernelSpec::gaussian(0.125, 2));
  CHECK(st.converged);
  CHECK(st.iterations == 0);
  for (int k = 0; k <= 4; ++k) CHECK(st.u.frame(k).values.norm() == 0.0);
}

TEST_CASE("a dominant kinetic term keeps the minimiser at zero") {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  MatchConfig cfg;
  cfg.n_time = 4;
  cfg.sigma2 = 1e12;
  const auto st = optimize(pair.moving, pair.fixed, cfg, KernelSpec::gaussian(0.125, 2));
  double umax = 0;
  for (int k = 0; k <= 4; ++k) umax = std::max(umax, st.u.frame(k).values.cwiseAbs().maxCoeff());
  CHECK(umax <= 1e-9);
}

TEST_CASE("relaxation: monotone, diffeomorphic, constant speed, colinear momentum") {
  const Run coarse = relax_blob(32, 300);
  const Run fine = relax_blob(64, 200);
  for (const Run* r : {&coarse, &fine}) {
    const auto& tr = r->state.trace;
    for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i].total < tr[i - 1].total);
    CHECK(jacobian_det(r->state.phi1).diffeomorphic());
    CHECK(jacobian_det(r->state.phi1_inv).diffeomorphic());
    CHECK(r->norm_drift <= 0.02);
    CHECK(r->state.final_mismatch < 0.1 * r->state.initial_mismatch);
  }
  CAPTURE(coarse.perpendicular_fraction);
  CAPTURE(fine.perpendicular_fraction);
  CHECK(fine.perpendicular_fraction <= 0.1);
  CHECK(coarse.perpendicular_fraction / fine.perpendicular_fraction >= 2.0);
}

TEST_CASE("configuration and kernel validation") {
  const auto pair = diffeo::testing::blob_pair(32, 1.5, 2.5);
  MatchConfig bad;
  bad.sigma2 = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = MatchConfig{};
  bad.n_time = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = MatchConfig{};
  bad.armijo_c = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = MatchConfig{};
  bad.step0 = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(optimize(pair.moving, pair.fixed, MatchConfig{}, KernelSpec::sobolev(0.05, 2, 2)),
                  std::invalid_argument);
}
