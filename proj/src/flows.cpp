#include "diffeo/flows.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace diffeo {

VelocityPath::VelocityPath(const Grid& g, int n_time) : grid_(g) {
  if (n_time < 1) throw std::invalid_argument("VelocityPath: need at least one time interval");
  frames_.assign(n_time + 1, VectorField(g));
}

VelocityPath VelocityPath::constant(const VectorField& u, int n_time) {
  VelocityPath p(u.grid, n_time);
  for (auto& f : p.frames_) f = u;
  return p;
}

Eigen::MatrixXd VelocityPath::at(double t) const {
  const int n = intervals();
  const double s = std::clamp(t, 0.0, 1.0) * n;
  const int k = std::min(int(std::floor(s)), n - 1);
  const double w = s - k;
  return (1 - w) * frames_[k].values + w * frames_[k + 1].values;
}

bool VelocityPath::all_finite() const {
  for (const auto& f : frames_)
    if (!f.all_finite()) return false;
  return true;
}

void VelocityPath::require_compatible(const VelocityPath& o) const {
  require_same_grid(grid_, o.grid_, "VelocityPath");
  if (o.frames_.size() != frames_.size())
    throw std::invalid_argument("VelocityPath: time grids differ");
}

VelocityPath& VelocityPath::operator+=(const VelocityPath& o) {
  require_compatible(o);
  for (size_t k = 0; k < frames_.size(); ++k) frames_[k].values += o.frames_[k].values;
  return *this;
}

VelocityPath& VelocityPath::operator-=(const VelocityPath& o) {
  require_compatible(o);
  for (size_t k = 0; k < frames_.size(); ++k) frames_[k].values -= o.frames_[k].values;
  return *this;
}

VelocityPath& VelocityPath::operator*=(double s) {
  for (auto& f : frames_) f.values *= s;
  return *this;
}

DeformationField::DeformationField(const Grid& g, Eigen::MatrixXd p) : grid(g), positions(std::move(p)) {
  if (positions.rows() != g.size() || positions.cols() != g.dim)
    throw std::invalid_argument("DeformationField: size mismatch");
}

DeformationField DeformationField::identity(const Grid& g) { return {g, node_positions(g)}; }

DeformationField DeformationField::translation(const Grid& g, const Eigen::VectorXd& c) {
  DeformationField phi = identity(g);
  phi.positions.rowwise() += c.transpose();
  return phi;
}

Eigen::MatrixXd DeformationField::displacement() const { return positions - node_positions(grid); }

void DeformationField::evaluate(const double* y, double* out) const {
  const Stencil s = make_stencil(grid, y);
  for (int a = 0; a < grid.dim; ++a) {
    double acc = 0;
    for (int c = 0; c < s.count; ++c) {
      const Index j = s.node[c];
      acc += s.weight[c] * (positions(j, a) - grid.coord(j, a));
    }
    out[a] = y[a] + acc;
  }
}

namespace {

void sample(const Grid& g, const Eigen::MatrixXd& v, const double* y, double* out) {
  const Stencil s = make_stencil(g, y);
  for (int a = 0; a < g.dim; ++a) {
    double acc = 0;
    for (int c = 0; c < s.count; ++c) acc += s.weight[c] * v(s.node[c], a);
    out[a] = acc;
  }
}

int frame_index(double t, int n) {
  const double s = t * n;
  const double r = std::round(s);
  if (std::abs(s - r) > 1e-9 || r < 0 || r > n)
    throw std::invalid_argument("integrate_flow: times must lie on the frame grid");
  return int(r);
}

}  // namespace

void rk4_particle_step(const Grid& g, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       double dt, double* y) {
  const int d = g.dim;
  double k1[3], k2[3], k3[3], k4[3], z[3];
  double va[3], vb[3];
  sample(g, a, y, k1);
  for (int i = 0; i < d; ++i) z[i] = y[i] + 0.5 * dt * k1[i];
  sample(g, a, z, va);
  sample(g, b, z, vb);
  for (int i = 0; i < d; ++i) k2[i] = 0.5 * (va[i] + vb[i]);
  for (int i = 0; i < d; ++i) z[i] = y[i] + 0.5 * dt * k2[i];
  sample(g, a, z, va);
  sample(g, b, z, vb);
  for (int i = 0; i < d; ++i) k3[i] = 0.5 * (va[i] + vb[i]);
  for (int i = 0; i < d; ++i) z[i] = y[i] + dt * k3[i];
  sample(g, b, z, k4);
  for (int i = 0; i < d; ++i) y[i] += dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
}

DeformationField integrate_flow(const VelocityPath& u, double s, double t, int substeps) {
  if (!u.all_finite()) throw std::invalid_argument("integrate_flow: non-finite velocity");
  if (substeps < 1) throw std::invalid_argument("integrate_flow: substeps must be >= 1");
  const int n = u.intervals();
  const int ks = frame_index(s, n), kt = frame_index(t, n);
  const Grid& g = u.grid();
  DeformationField phi = DeformationField::identity(g);
  if (ks == kt) return phi;
  const int dir = kt > ks ? 1 : -1;
  const double dt = dir / double(n * substeps);

  // per-step frame pairs, sub-sampled linearly in time
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> steps;
  for (int k = ks; k != kt; k += dir) {
    const Eigen::MatrixXd& fa = u.frame(k).values;
    const Eigen::MatrixXd& fb = u.frame(k + dir).values;
    for (int j = 0; j < substeps; ++j) {
      const double w0 = double(j) / substeps, w1 = double(j + 1) / substeps;
      steps.emplace_back((1 - w0) * fa + w0 * fb, (1 - w1) * fa + w1 * fb);
    }
  }
  parallel_for(g.size(), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      double y[3] = {0, 0, 0};
      for (int a = 0; a < g.dim; ++a) y[a] = phi.positions(i, a);
      for (const auto& [fa, fb] : steps) rk4_particle_step(g, fa, fb, dt, y);
      for (int a = 0; a < g.dim; ++a) phi.positions(i, a) = y[a];
    }
  });
  return phi;
}

DeformationField compose(const DeformationField& phi, const DeformationField& psi) {
  require_same_grid(phi.grid, psi.grid, "compose");
  const Grid& g = phi.grid;
  DeformationField out(g, Eigen::MatrixXd(g.size(), g.dim));
  const Eigen::MatrixXd disp = phi.displacement();
  parallel_for(g.size(), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      double y[3] = {0, 0, 0}, v[3];
      for (int a = 0; a < g.dim; ++a) y[a] = psi.positions(i, a);
      sample(g, disp, y, v);
      for (int a = 0; a < g.dim; ++a) out.positions(i, a) = y[a] + v[a];
    }
  });
  return out;
}

Eigen::MatrixXd jacobian_matrices(const DeformationField& phi) {
  const Grid& g = phi.grid;
  const int d = g.dim;
  const Eigen::MatrixXd disp = phi.displacement();
  Eigen::MatrixXd jac(g.size(), d * d);
  const double inv2h = 0.5 / g.spacing;
  for (Index i = 0; i < g.size(); ++i) {
    for (int b = 0; b < d; ++b) {
      const Index ip = g.neighbour(i, b, 1), im = g.neighbour(i, b, -1);
      for (int a = 0; a < d; ++a)
        jac(i, a * d + b) = (a == b ? 1.0 : 0.0) + (disp(ip, a) - disp(im, a)) * inv2h;
    }
  }
  return jac;
}

JacobianDeterminant jacobian_det(const DeformationField& phi) {
  const Grid& g = phi.grid;
  const int d = g.dim;
  const Eigen::MatrixXd jac = jacobian_matrices(phi);
  JacobianDeterminant out{ScalarField(g)};
  for (Index i = 0; i < g.size(); ++i) {
    double det;
    if (d == 1) {
      det = jac(i, 0);
    } else if (d == 2) {
      det = jac(i, 0) * jac(i, 3) - jac(i, 1) * jac(i, 2);
    } else {
      Eigen::Matrix3d m;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = jac(i, r * 3 + c);
      det = m.determinant();
    }
    out.det[i] = det;
    if (!(det > 0)) ++out.nonpositive;
  }
  out.min = out.det.values.minCoeff();
  return out;
}

double map_distance(const DeformationField& a, const DeformationField& b) {
  require_same_grid(a.grid, b.grid, "map_distance");
  return (a.positions - b.positions).cwiseAbs().maxCoeff();
}

DeformationField invert_map(const DeformationField& phi, int max_iters, double tol) {
  const Grid& g = phi.grid;
  const int d = g.dim;
  const Eigen::MatrixXd disp = phi.displacement();
  const Eigen::MatrixXd x = node_positions(g);
  DeformationField psi(g, x - disp);
  const double limit = tol * g.spacing;
  std::vector<char> failed(g.size(), 0);
  // residual r(y) = y + disp(y) - x, solved node by node with damped Newton
  auto residual = [&](const double* y, Index i, double* r) {
    sample(g, disp, y, r);
    double n2 = 0;
    for (int a = 0; a < d; ++a) {
      r[a] += y[a] - x(i, a);
      n2 += r[a] * r[a];
    }
    return std::sqrt(n2);
  };
  parallel_for(g.size(), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      double y[3] = {0, 0, 0}, r[3] = {0, 0, 0};
      for (int a = 0; a < d; ++a) y[a] = psi.positions(i, a);
      double norm = residual(y, i, r);
      int it = 0;
      for (; it < max_iters && norm > limit; ++it) {
        const Stencil st = make_stencil(g, y);
        Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
        for (int c = 0; c < st.count; ++c)
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) J(a, b) += disp(st.node[c], a) * st.dweight[c][b];
        Eigen::Vector3d rhs(r[0], r[1], r[2]);
        Eigen::Vector3d step = Eigen::Vector3d::Zero();
        step.head(d) = J.topLeftCorner(d, d).partialPivLu().solve(rhs.head(d));
        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k < 30 && !accepted; ++k, lambda *= 0.5) {
          double z[3] = {0, 0, 0}, rz[3] = {0, 0, 0};
          for (int a = 0; a < d; ++a) z[a] = y[a] - lambda * step[a];
          const double nz = residual(z, i, rz);
          if (std::isfinite(nz) && nz < norm) {
            std::copy(z, z + 3, y);
            std::copy(rz, rz + 3, r);
            norm = nz;
            accepted = true;
          }
        }
        if (!accepted) break;
      }
      if (!(norm <= limit)) failed[i] = 1;
      for (int a = 0; a < d; ++a) psi.positions(i, a) = y[a];
    }
  });
  if (std::find(failed.begin(), failed.end(), 1) != failed.end())
    throw DiffeomorphismError("invert_map: the map could not be inverted at every node");
  return psi;
}

}  // namespace diffeo
