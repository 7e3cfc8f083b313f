// Periodic sampling grids and the fields carried on them.
//
// Nodes are stored in row-major order with the last axis fastest. Node
// (i_0, ..., i_{d-1}) sits at physical position (i_0 h, ..., i_{d-1} h); the
// domain is the torus [0, n_0 h) x ... x [0, n_{d-1} h).
#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <stdexcept>
#include <string>

namespace diffeo {

using Index = Eigen::Index;

struct Grid {
  int dim = 2;
  std::array<int, 3> extent{1, 1, 1};
  double spacing = 1.0;

  Grid() = default;
  Grid(int d, std::array<int, 3> n, double h);

  static Grid square(int d, int n, double h = 1.0);

  Index size() const { return Index(extent[0]) * extent[1] * extent[2]; }
  double length(int axis) const { return extent[axis] * spacing; }
  double cell_volume() const;
  double volume() const { return cell_volume() * double(size()); }

  /// Multi-index of a flat node index.
  std::array<int, 3> unravel(Index i) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      idx[a] = int(i % extent[a]);
      i /= extent[a];
    }
    return idx;
  }
  Index ravel(const std::array<int, 3>& idx) const {
    Index i = 0;
    for (int a = 0; a < dim; ++a) i = i * extent[a] + idx[a];
    return i;
  }
  /// Flat index of the node offset by `step` along `axis`, wrapping around.
  Index neighbour(Index i, int axis, int step) const;
  /// Physical coordinate of node i along axis a.
  double coord(Index i, int axis) const { return unravel(i)[axis] * spacing; }

  bool operator==(const Grid& o) const {
    return dim == o.dim && extent == o.extent && spacing == o.spacing;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

void require_same_grid(const Grid& a, const Grid& b, const char* what);

struct ScalarField {
  Grid grid;
  Eigen::VectorXd values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid(g), values(Eigen::VectorXd::Zero(g.size())) {}
  ScalarField(const Grid& g, Eigen::VectorXd v);

  static ScalarField from_function(const Grid& g, const std::function<double(const double*)>& f);

  double& operator[](Index i) { return values[i]; }
  double operator[](Index i) const { return values[i]; }
  bool all_finite() const { return values.allFinite(); }
};

/// d-vector per node; row i is the vector at node i, column a is component a.
struct VectorField {
  Grid grid;
  Eigen::MatrixXd values;

  VectorField() = default;
  explicit VectorField(const Grid& g) : grid(g), values(Eigen::MatrixXd::Zero(g.size(), g.dim)) {}
  VectorField(const Grid& g, Eigen::MatrixXd v);

  static VectorField from_function(const Grid& g,
                                   const std::function<void(const double*, double*)>& f);

  bool all_finite() const { return values.allFinite(); }
};

/// Node positions x_i as a field (the identity map).
Eigen::MatrixXd node_positions(const Grid& g);

/// Periodic multilinear interpolation stencil at an arbitrary point.
struct Stencil {
  int count = 0;
  std::array<Index, 8> node{};
  std::array<double, 8> weight{};
  /// d weight / d y_axis
  std::array<std::array<double, 3>, 8> dweight{};
};

Stencil make_stencil(const Grid& g, const double* y);

inline double interpolate(const Stencil& s, const Eigen::VectorXd& v) {
  double acc = 0;
  for (int c = 0; c < s.count; ++c) acc += s.weight[c] * v[s.node[c]];
  return acc;
}

double interpolate(const ScalarField& f, const double* y);

/// Wraps a physical position into the base cell.
void wrap_position(const Grid& g, double* y);

/// Runs body(begin, end) over [0, n) split into contiguous chunks. Chunks
/// are independent, so results never depend on the thread count.
void parallel_for(Index n, const std::function<void(Index, Index)>& body);

/// Worker count: DIFFEO_THREADS if set to a positive value, else the
/// hardware concurrency.
int thread_count();

}  // namespace diffeo
