#include "diffeo/grid.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

namespace diffeo {

Grid::Grid(int d, std::array<int, 3> n, double h) : dim(d), extent(n), spacing(h) {
  if (d < 1 || d > 3) throw std::invalid_argument("Grid: dimension must be 1, 2 or 3");
  if (!(h > 0) || !std::isfinite(h)) throw std::invalid_argument("Grid: spacing must be > 0");
  for (int a = 0; a < 3; ++a) {
    if (a >= d) {
      extent[a] = 1;
    } else if (n[a] < 1) {
      throw std::invalid_argument("Grid: extents must be positive");
    }
  }
}

Grid Grid::square(int d, int n, double h) { return Grid(d, {n, d > 1 ? n : 1, d > 2 ? n : 1}, h); }

double Grid::cell_volume() const { return std::pow(spacing, dim); }

Index Grid::neighbour(Index i, int axis, int step) const {
  auto idx = unravel(i);
  const int n = extent[axis];
  idx[axis] = ((idx[axis] + step) % n + n) % n;
  return ravel(idx);
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": fields live on different grids");
}

ScalarField::ScalarField(const Grid& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
  if (values.size() != g.size()) throw std::invalid_argument("ScalarField: size mismatch");
}

ScalarField ScalarField::from_function(const Grid& g,
                                       const std::function<double(const double*)>& f) {
  ScalarField out(g);
  for (Index i = 0; i < g.size(); ++i) {
    const auto idx = g.unravel(i);
    const double x[3] = {idx[0] * g.spacing, idx[1] * g.spacing, idx[2] * g.spacing};
    out.values[i] = f(x);
  }
  return out;
}

VectorField::VectorField(const Grid& g, Eigen::MatrixXd v) : grid(g), values(std::move(v)) {
  if (values.rows() != g.size() || values.cols() != g.dim)
    throw std::invalid_argument("VectorField: size mismatch");
}

VectorField VectorField::from_function(const Grid& g,
                                       const std::function<void(const double*, double*)>& f) {
  VectorField out(g);
  for (Index i = 0; i < g.size(); ++i) {
    const auto idx = g.unravel(i);
    const double x[3] = {idx[0] * g.spacing, idx[1] * g.spacing, idx[2] * g.spacing};
    double v[3] = {0, 0, 0};
    f(x, v);
    for (int a = 0; a < g.dim; ++a) out.values(i, a) = v[a];
  }
  return out;
}

Eigen::MatrixXd node_positions(const Grid& g) {
  Eigen::MatrixXd x(g.size(), g.dim);
  for (Index i = 0; i < g.size(); ++i) {
    const auto idx = g.unravel(i);
    for (int a = 0; a < g.dim; ++a) x(i, a) = idx[a] * g.spacing;
  }
  return x;
}

Stencil make_stencil(const Grid& g, const double* y) {
  Stencil s;
  int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  double f[3] = {0, 0, 0};
  for (int a = 0; a < g.dim; ++a) {
    const double t = y[a] / g.spacing;
    const double fl = std::floor(t);
    f[a] = t - fl;
    const int n = g.extent[a];
    long long i0 = static_cast<long long>(fl) % n;
    if (i0 < 0) i0 += n;
    lo[a] = int(i0);
    hi[a] = int((i0 + 1) % n);
  }
  s.count = 1 << g.dim;
  const double inv_h = 1.0 / g.spacing;
  for (int c = 0; c < s.count; ++c) {
    std::array<int, 3> idx{0, 0, 0};
    double w = 1;
    double fac[3];
    for (int a = 0; a < g.dim; ++a) {
      const bool up = (c >> a) & 1;
      idx[a] = up ? hi[a] : lo[a];
      fac[a] = up ? f[a] : 1.0 - f[a];
      w *= fac[a];
    }
    s.node[c] = g.ravel(idx);
    s.weight[c] = w;
    for (int a = 0; a < g.dim; ++a) {
      double dw = ((c >> a) & 1) ? inv_h : -inv_h;
      for (int b = 0; b < g.dim; ++b)
        if (b != a) dw *= fac[b];
      s.dweight[c][a] = dw;
    }
  }
  return s;
}

double interpolate(const ScalarField& f, const double* y) {
  return interpolate(make_stencil(f.grid, y), f.values);
}

void wrap_position(const Grid& g, double* y) {
  for (int a = 0; a < g.dim; ++a) {
    const double len = g.length(a);
    y[a] -= len * std::floor(y[a] / len);
  }
}

int thread_count() {
  if (const char* env = std::getenv("DIFFEO_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

void parallel_for(Index n, const std::function<void(Index, Index)>& body) {
  const int workers = int(std::min<Index>(thread_count(), std::max<Index>(1, n / 256)));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Index b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace diffeo
