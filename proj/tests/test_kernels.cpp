#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "diffeo/kernels.hpp"
#include "support.hpp"

using namespace diffeo;
using diffeo::testing::band_limited;
using diffeo::testing::band_limited_vector;

namespace {

/// Periodic Fourier series (1/L^d) sum_m s(xi_m) cos(xi_m . x) by direct
/// summation over an n^d mode box.
double fourier_series(const KernelSpec& spec, double L, int n, const Eigen::VectorXd& x) {
  const int d = spec.dim;
  double acc = 0;
  const int lo = -n / 2, hi = n / 2 - 1;
  std::array<int, 3> m{0, 0, 0};
  std::function<void(int)> rec = [&](int ax) {
    if (ax == d) {
      double xi2 = 0, phase = 0;
      for (int a = 0; a < d; ++a) {
        const double xi = 2 * M_PI * m[a] / L;
        xi2 += xi * xi;
        phase += xi * x[a];
      }
      acc += spec.symbol(xi2) * std::cos(phase);
      return;
    }
    for (m[ax] = lo; m[ax] <= hi; ++m[ax]) rec(ax + 1);
  };
  rec(0);
  return acc / std::pow(L, d);
}

double min_eig(const Eigen::MatrixXd& k) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff();
}

Eigen::MatrixXd random_points(int n, int d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, scale);
  Eigen::MatrixXd q(n, d);
  for (Index i = 0; i < q.size(); ++i) q.data()[i] = u(rng);
  return q;
}

}  // namespace

TEST_CASE("gaussian kernel values") {
  const auto spec = KernelSpec::gaussian(0.3, 2);
  const double x[2] = {0.1, 0.2}, y[2] = {0.1 + 0.3, 0.2};
  CHECK((kernel_eval(spec, x, x) - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
  CHECK((kernel_eval(spec, x, y) - std::exp(-0.5) * Eigen::MatrixXd::Identity(2, 2)).norm() <=
        1e-15);
}

TEST_CASE("sobolev profile matches the periodic Fourier series of its symbol") {
  for (int d : {1, 2}) {
    const double alpha = 0.1;
    const auto spec = KernelSpec::sobolev(alpha, 3, d);
    const double L = 24 * alpha;
    for (double r : {0.0, 0.5 * alpha, alpha, 2 * alpha}) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
      for (int a = 0; a < d; ++a) x[a] = r / std::sqrt(double(d));
      const double oracle = fourier_series(spec, L, d == 1 ? 4096 : 256, x);
      CAPTURE(d);
      CAPTURE(r);
      CHECK(std::abs(spec.profile(r) - oracle) / oracle <= 1e-3);
    }
  }
}

TEST_CASE("kernel blocks are symmetric") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& spec : {KernelSpec::gaussian(0.4, 3), KernelSpec::sobolev(0.3, 3, 3)}) {
    for (int k = 0; k < 20; ++k) {
      const double x[3] = {u(rng), u(rng), u(rng)}, y[3] = {u(rng), u(rng), u(rng)};
      CHECK((kernel_eval(spec, x, y) - kernel_eval(spec, y, x).transpose()).norm() == 0.0);
    }
  }
}

TEST_CASE("L on constants and plane waves") {
  const Grid g = Grid::square(2, 32, 1.0 / 32);
  const auto spec = KernelSpec::sobolev(0.05, 3, 2);
  const GridKernel K(spec, g);
  VectorField c(g);
  c.values.col(0).setConstant(0.7);
  c.values.col(1).setConstant(-1.1);
  CHECK((K.apply_L(c).values - c.values).cwiseAbs().maxCoeff() <= 1e-12);

  const int m0 = 3, m1 = 2;
  const double xi0 = 2 * M_PI * m0, xi1 = 2 * M_PI * m1;
  VectorField w(g);
  for (Index i = 0; i < g.size(); ++i) w.values(i, 1) = std::sin(xi0 * g.coord(i, 0) + xi1 * g.coord(i, 1));
  const double factor = std::pow(1 + 0.05 * 0.05 * (xi0 * xi0 + xi1 * xi1), 3);
  CHECK((K.apply_L(w).values - factor * w.values).cwiseAbs().maxCoeff() <= 1e-10 * factor);
}

TEST_CASE("K and L are mutually inverse") {
  const Grid g = Grid::square(2, 32, 1.0 / 32);
  for (const auto& spec : {KernelSpec::gaussian(0.1, 2), KernelSpec::sobolev(0.05, 3, 2)}) {
    const GridKernel K(spec, g);
    // both operators are diagonal in the Fourier basis, so the operator norm
    // of K L - Id is the largest deviation of the multiplier product
    CHECK((K.k_symbol() * K.l_symbol() - 1).abs().maxCoeff() <= 1e-14);
    VectorField zero(g);
    CHECK(K.apply_K(zero).values.norm() == 0.0);
    for (int s = 0; s < 5; ++s) {
      const VectorField u = band_limited_vector(g, 3, 10 + s);
      const double n = u.values.norm();
      CHECK((K.apply_K(K.apply_L(u)).values - u.values).norm() / n <= 1e-10);
      // L amplifies rounding noise in K u by up to the inverse symbol floor,
      // so L K is only checked where L stays well conditioned
      if (spec.kind == KernelKind::sobolev)
        CHECK((K.apply_L(K.apply_K(u)).values - u.values).norm() / n <= 1e-10);
    }
  }
}

TEST_CASE("L is self-adjoint in L2") {
  const Grid g = Grid::square(2, 32, 1.0 / 32);
  const GridKernel K(KernelSpec::sobolev(0.05, 3, 2), g);
  for (int s = 0; s < 5; ++s) {
    const VectorField u = band_limited_vector(g, 4, 20 + s), v = band_limited_vector(g, 4, 40 + s);
    const double a = K.inner_L(u, v);
    const double b = l2_inner(K.apply_L(u), v);
    CHECK(std::abs(a - b) / std::abs(a) <= 1e-10);
  }
}

TEST_CASE("a point source reproduces the kernel column") {
  const int n = 128;
  const Grid g = Grid::square(2, n, 1.0 / n);
  const auto spec = KernelSpec::gaussian(0.08, 2);
  const GridKernel K(spec, g);
  const std::array<int, 3> node{n / 2, n / 2, 0};
  const Index i0 = g.ravel(node);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(g.size());
  delta[i0] = 1.0 / g.cell_volume();
  const Eigen::VectorXd col = K.apply_K(delta);
  const double x0[2] = {g.coord(i0, 0), g.coord(i0, 1)};
  double worst = 0;
  for (Index i = 0; i < g.size(); ++i) {
    const double x[2] = {g.coord(i, 0), g.coord(i, 1)};
    const double ref = kernel_eval(spec, x, x0)(0, 0);
    worst = std::max(worst, std::abs(col[i] - ref));
  }
  CHECK(worst <= 1e-3 * spec.profile(0));
}

TEST_CASE("reproducing property through grid quadrature") {
  const int n = 96;
  const Grid g = Grid::square(2, n, 1.0 / n);
  const auto spec = KernelSpec::gaussian(0.08, 2);
  const GridKernel K(spec, g);
  const Index ix = g.ravel({40, 44, 0}), iy = g.ravel({50, 47, 0});
  const Eigen::Vector2d a(0.3, -0.8), b(1.2, 0.5);
  VectorField mx(g), my(g);
  mx.values.row(ix) = a.transpose() / g.cell_volume();
  my.values.row(iy) = b.transpose() / g.cell_volume();
  const VectorField ux = K.apply_K(mx), uy = K.apply_K(my);
  const double x[2] = {g.coord(ix, 0), g.coord(ix, 1)}, y[2] = {g.coord(iy, 0), g.coord(iy, 1)};
  const double ref = a.dot(kernel_eval(spec, x, y) * b);
  CHECK(std::abs(K.inner_L(ux, uy) - ref) / std::abs(ref) <= 1e-2);
}

TEST_CASE("kernel matrices") {
  const auto spec = KernelSpec::gaussian(0.3, 2);
  Eigen::MatrixXd one(1, 2);
  one << 0.2, 0.4;
  CHECK((kernel_matrix(spec, one) - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);

  Eigen::MatrixXd twin(2, 2);
  twin << 0.2, 0.4, 0.2, 0.4;
  CHECK(std::abs(min_eig(kernel_matrix(spec, twin))) <= 1e-12);

  for (const auto& s : {spec, KernelSpec::sobolev(0.2, 3, 2)}) {
    const Eigen::MatrixXd k = kernel_matrix(s, random_points(10, 2, 5));
    CHECK((k - k.transpose()).norm() == 0.0);
    CHECK(min_eig(k) >= psd_tolerance(k));
  }
}

TEST_CASE("admissibility gate") {
  CHECK(admissibility_report(KernelSpec::gaussian(0.1, 2)).pass);
  const auto rough = admissibility_report(KernelSpec::sobolev(0.1, 1, 3));
  CHECK_FALSE(rough.pass);
  CHECK_FALSE(rough.order_ok);
  CHECK(admissibility_report(KernelSpec::sobolev(0.1, 3, 3)).pass);
  // the smoothness bound is strict: s = d/2 + 1 is rejected
  CHECK_FALSE(admissibility_report(KernelSpec::sobolev(0.1, 2, 2)).pass);
  // a kernel wider than the periodic cell fails the decay check
  const auto wide = admissibility_report(KernelSpec::gaussian(0.5, 2), 1.0);
  CHECK_FALSE(wide.pass);
  CHECK_FALSE(wide.decay_ok);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS(KernelSpec::gaussian(0.0, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(KernelSpec::gaussian(0.1, 4).validate(), std::invalid_argument);
  CHECK_THROWS_AS(KernelSpec::sobolev(-1.0, 3, 2).validate(), std::invalid_argument);
  CHECK_THROWS_AS(KernelSpec::sobolev(0.1, 0, 2).validate(), std::invalid_argument);
}

TEST_CASE("PSD over 50 random configurations") {
  for (int c = 0; c < 50; ++c) {
    const int d = 1 + c % 3;
    const auto spec = c % 2 ? KernelSpec::gaussian(0.2, d) : KernelSpec::sobolev(0.2, 3, d);
    const Eigen::MatrixXd k = kernel_matrix(spec, random_points(12, d, 100 + c));
    CHECK(min_eig(k) >= psd_tolerance(k));
  }
}
