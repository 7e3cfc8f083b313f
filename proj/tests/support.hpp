// Helpers shared by the unit suites and the acceptance runner.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "diffeo/grid.hpp"
#include "diffeo/image.hpp"
#include "diffeo/kernels.hpp"
#include "diffeo/shoot.hpp"

namespace diffeo::testing {

/// Smooth periodic field: random cosines over |mode| <= modes on every axis.
inline Eigen::VectorXd band_limited(const Grid& g, int modes, std::uint64_t seed,
                                    double amplitude = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(g.size());
  const int ky_max = g.dim >= 2 ? modes : 0;
  const int kz_max = g.dim >= 3 ? modes : 0;
  for (int kx = -modes; kx <= modes; ++kx)
    for (int ky = -ky_max; ky <= ky_max; ++ky)
      for (int kz = -kz_max; kz <= kz_max; ++kz) {
        const double a = nd(rng) * amplitude, phase = nd(rng);
        const int k[3] = {kx, ky, kz};
        for (Index i = 0; i < g.size(); ++i) {
          double arg = phase;
          for (int ax = 0; ax < g.dim; ++ax) arg += 2 * M_PI * k[ax] * g.coord(i, ax) / g.length(ax);
          f[i] += a * std::cos(arg);
        }
      }
  return f;
}

inline VectorField band_limited_vector(const Grid& g, int modes, std::uint64_t seed,
                                       double amplitude = 1.0) {
  VectorField v(g);
  for (int a = 0; a < g.dim; ++a) v.values.col(a) = band_limited(g, modes, seed + 101 * a, amplitude);
  return v;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

/// Source and target of the translated-blob fixture: width 5h at the centre
/// of the unit torus and the same blob shifted 3h along axis 1.
struct BlobPair {
  Grid grid;
  Image moving, fixed;
};

inline BlobPair blob_pair(int n = 64, double shift_cells = 3.0, double width_cells = 5.0) {
  BlobPair b;
  b.grid = Grid::square(2, n, 1.0 / n);
  const double h = b.grid.spacing;
  Eigen::VectorXd c0(2);
  c0 << 0.5, 0.5;
  Eigen::VectorXd c1 = c0;
  c1[1] += shift_cells * h;
  b.moving = gaussian_blob(b.grid, c0, width_cells * h);
  b.fixed = gaussian_blob(b.grid, c1, width_cells * h);
  return b;
}

/// Generic shooting data on 64^2: a width-5h blob, a gaussian kernel of
/// width 8h and a random low-mode momentum scaled so that max |u_0| = 6h.
struct ShootFixture {
  Grid grid;
  KernelSpec spec;
  Image I0;
  ImageMomentum P0;
};

inline ShootFixture shoot_fixture(int n = 64) {
  ShootFixture f;
  f.grid = Grid::square(2, n, 1.0 / n);
  const double h = f.grid.spacing;
  Eigen::VectorXd c(2);
  c << 0.5, 0.5;
  f.I0 = gaussian_blob(f.grid, c, 5 * h);
  f.spec = KernelSpec::gaussian(8 * h, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  f.P0 = ImageMomentum(f.grid);
  for (int kx = -3; kx <= 3; ++kx)
    for (int ky = -3; ky <= 3; ++ky) {
      const double a = nd(rng), ph = nd(rng);
      for (Index i = 0; i < f.grid.size(); ++i)
        f.P0[i] += a * std::cos(2 * M_PI * (kx * f.grid.coord(i, 0) + ky * f.grid.coord(i, 1)) + ph);
    }
  const Shooter sh(f.spec, f.grid);
  const double umax = sh.velocity(f.I0, f.P0).values.rowwise().norm().maxCoeff();
  f.P0.values *= 6 * h / umax;
  return f;
}

/// Points with coordinates uniform in [-spread, spread].
inline Eigen::MatrixXd random_points(int n, int d, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-spread, spread);
  Eigen::MatrixXd q(n, d);
  for (Index i = 0; i < q.size(); ++i) q.data()[i] = ud(rng);
  return q;
}

/// Row-major flattening, matching the layout of kernel_matrix.
inline Eigen::VectorXd flat(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index a = 0; a < m.cols(); ++a) v[i * m.cols() + a] = m(i, a);
  return v;
}

/// Kernel field sum_j K(., c_j) w_j: centres and weights as rows.
struct KernelField {
  Eigen::MatrixXd centres, weights;
};

/// <X, Y>_H of two kernel fields via the reproducing property.
inline double h_inner(const KernelSpec& spec, const KernelField& x, const KernelField& y) {
  double acc = 0;
  for (Index i = 0; i < x.centres.rows(); ++i)
    for (Index j = 0; j < y.centres.rows(); ++j)
      acc += spec.profile((x.centres.row(i) - y.centres.row(j)).norm()) * x.weights.row(i).dot(y.weights.row(j));
  return acc;
}

/// Random kernel field through the landmarks with prescribed values U there:
/// free weights on `extra` centres, landmark weights solved for.
inline KernelField random_lift(const KernelSpec& spec, const Eigen::MatrixXd& q, const Eigen::MatrixXd& U,
                               const Eigen::MatrixXd& extra, const Eigen::MatrixXd& free_weights) {
  const Index n = q.rows(), m = extra.rows(), d = q.cols();
  Eigen::MatrixXd pulled = U;
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < m; ++k)
      pulled.row(i) -= spec.profile((q.row(i) - extra.row(k)).norm()) * free_weights.row(k);
  const Eigen::VectorXd a = kernel_matrix(spec, q).ldlt().solve(flat(pulled));
  KernelField f;
  f.centres.resize(n + m, d);
  f.weights.resize(n + m, d);
  f.centres << q, extra;
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < d; ++c) f.weights(i, c) = a[i * d + c];
  f.weights.bottomRows(m) = free_weights;
  return f;
}

inline std::filesystem::path data_dir() { return DIFFEO_DATA_DIR; }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("diffeo-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace diffeo::testing
