#include "diffeo/landmarks.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "diffeo/optim.hpp"

namespace diffeo {

void LandmarkState::validate() const {
  kernel.validate();
  if (q.rows() < 1) throw std::invalid_argument("landmarks: need at least one point");
  if (q.cols() != kernel.dim) throw std::invalid_argument("landmarks: point dimension mismatch");
  if (p.rows() != q.rows() || p.cols() != q.cols())
    throw std::invalid_argument("landmarks: momentum shape differs from points");
  if (!q.allFinite() || !p.allFinite()) throw std::invalid_argument("landmarks: non-finite state");
}

namespace {

double kernel_width(const KernelSpec& spec) {
  return spec.kind == KernelKind::gaussian ? spec.lambda : spec.alpha;
}

}  // namespace

double profile_slope_over_r(const KernelSpec& spec, double r) {
  r = std::abs(r);
  if (spec.kind == KernelKind::gaussian) return -spec.profile(r) / (spec.lambda * spec.lambda);
  // fourth-order differences of the even extension
  const double h = 1e-3 * spec.alpha;
  auto k = [&](double x) { return spec.profile(std::abs(x)); };
  if (r < 2 * h) {
    return (-2 * k(2 * h) + 32 * k(h) - 30 * k(0)) / (12 * h * h);
  }
  const double dk = (k(r - 2 * h) - 8 * k(r - h) + 8 * k(r + h) - k(r + 2 * h)) / (12 * h);
  return dk / r;
}

double hamiltonian(const LandmarkState& s) {
  s.validate();
  const Index n = s.q.rows();
  double h = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      h += s.kernel.profile((s.q.row(i) - s.q.row(j)).norm()) * s.p.row(i).dot(s.p.row(j));
  return 0.5 * h;
}

Eigen::MatrixXd landmark_velocity(const KernelSpec& spec, const Eigen::MatrixXd& q,
                                  const Eigen::MatrixXd& p) {
  const Index n = q.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, q.cols());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) v.row(i) += spec.profile((q.row(i) - q.row(j)).norm()) * p.row(j);
  return v;
}

Eigen::MatrixXd hamiltonian_gradient_q(const KernelSpec& spec, const Eigen::MatrixXd& q,
                                       const Eigen::MatrixXd& p) {
  const Index n = q.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, q.cols());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::RowVectorXd diff = q.row(i) - q.row(j);
      g.row(i) += p.row(i).dot(p.row(j)) * profile_slope_over_r(spec, diff.norm()) * diff;
    }
  return g;
}

namespace {

struct Phase {
  Eigen::MatrixXd q, p, J;
};

// D u at each landmark, row-major d x d per row: du_a/dx_b = sum_j p_ja s_ij (q_i - q_j)_b
Eigen::MatrixXd velocity_jacobian(const KernelSpec& spec, const Eigen::MatrixXd& q,
                                  const Eigen::MatrixXd& p) {
  const Index n = q.rows();
  const int d = int(q.cols());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, d * d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::RowVectorXd diff = q.row(i) - q.row(j);
      const double s = profile_slope_over_r(spec, diff.norm());
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) D(i, a * d + b) += p(j, a) * s * diff[b];
    }
  return D;
}

Phase rate(const KernelSpec& spec, const Phase& s, bool track) {
  Phase r{landmark_velocity(spec, s.q, s.p), -hamiltonian_gradient_q(spec, s.q, s.p),
          Eigen::MatrixXd()};
  if (track) {
    const int d = int(s.q.cols());
    const Eigen::MatrixXd D = velocity_jacobian(spec, s.q, s.p);
    r.J.resize(s.J.rows(), s.J.cols());
    for (Index i = 0; i < s.q.rows(); ++i) {
      Eigen::MatrixXd Du(d, d), Ji(d, d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          Du(a, b) = D(i, a * d + b);
          Ji(a, b) = s.J(i, a * d + b);
        }
      const Eigen::MatrixXd Ri = Du * Ji;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) r.J(i, a * d + b) = Ri(a, b);
    }
  }
  return r;
}

Phase axpy(const Phase& s, double h, const Phase& r, bool track) {
  Phase out{s.q + h * r.q, s.p + h * r.p, Eigen::MatrixXd()};
  if (track) out.J = s.J + h * r.J;
  return out;
}

}  // namespace

LandmarkTrajectory landmark_shoot(const LandmarkState& s0, int n_steps, bool track_jacobian) {
  s0.validate();
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  const KernelSpec& spec = s0.kernel;
  const int d = spec.dim;
  const Index n = s0.q.rows();
  const double dt = 1.0 / n_steps;
  Phase s{s0.q, s0.p, Eigen::MatrixXd()};
  if (track_jacobian) {
    s.J = Eigen::MatrixXd::Zero(n, d * d);
    for (int a = 0; a < d; ++a) s.J.col(a * d + a).setOnes();
  }
  LandmarkTrajectory traj;
  auto store = [&](double t) {
    traj.t.push_back(t);
    traj.q.push_back(s.q);
    traj.p.push_back(s.p);
    if (track_jacobian) traj.jacobian.push_back(s.J);
    traj.energy.push_back(hamiltonian({spec, s.q, s.p}));
  };
  store(0);
  for (int k = 0; k < n_steps; ++k) {
    const Phase r1 = rate(spec, s, track_jacobian);
    const Phase r2 = rate(spec, axpy(s, 0.5 * dt, r1, track_jacobian), track_jacobian);
    const Phase r3 = rate(spec, axpy(s, 0.5 * dt, r2, track_jacobian), track_jacobian);
    const Phase r4 = rate(spec, axpy(s, dt, r3, track_jacobian), track_jacobian);
    s.q += dt / 6 * (r1.q + 2 * r2.q + 2 * r3.q + r4.q);
    s.p += dt / 6 * (r1.p + 2 * r2.p + 2 * r3.p + r4.p);
    if (track_jacobian) s.J += dt / 6 * (r1.J + 2 * r2.J + 2 * r3.J + r4.J);
    if (!s.q.allFinite() || !s.p.allFinite())
      throw std::runtime_error("landmark_shoot: non-finite state");
    store((k + 1) * dt);
  }
  return traj;
}

std::vector<double> landmark_conservation_residual(const LandmarkTrajectory& traj) {
  if (traj.jacobian.size() != traj.p.size())
    throw std::invalid_argument("landmark_conservation_residual: trajectory lacks Jacobians");
  std::vector<double> out;
  if (traj.p.empty()) return out;
  const Eigen::MatrixXd& p0 = traj.p.front();
  const Index n = p0.rows();
  const int d = int(p0.cols());
  const double scale = p0.rowwise().norm().maxCoeff();
  for (size_t k = 0; k < traj.p.size(); ++k) {
    double worst = 0;
    for (Index i = 0; i < n; ++i) {
      Eigen::MatrixXd J(d, d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) J(a, b) = traj.jacobian[k](i, a * d + b);
      const Eigen::VectorXd pulled = J.transpose() * traj.p[k].row(i).transpose();
      worst = std::max(worst, (pulled - p0.row(i).transpose()).norm());
    }
    out.push_back(scale > 0 ? worst / scale : worst);
  }
  return out;
}

void require_distinct(const KernelSpec& spec, const Eigen::MatrixXd& q) {
  const double tol = 1e-9 * kernel_width(spec);
  for (Index i = 0; i < q.rows(); ++i)
    for (Index j = i + 1; j < q.rows(); ++j)
      if ((q.row(i) - q.row(j)).norm() <= tol)
        throw SingularConfigurationError("landmarks " + std::to_string(i) + " and " +
                                         std::to_string(j) + " coincide");
}

namespace {

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index a = 0; a < m.cols(); ++a) v[i * m.cols() + a] = m(i, a);
  return v;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Index rows, Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index a = 0; a < cols; ++a) m(i, a) = v[i * cols + a];
  return m;
}

Eigen::LLT<Eigen::MatrixXd> factor(const KernelSpec& spec, const Eigen::MatrixXd& q) {
  require_distinct(spec, q);
  Eigen::LLT<Eigen::MatrixXd> llt(kernel_matrix(spec, q));
  if (llt.info() != Eigen::Success)
    throw SingularConfigurationError("kernel matrix is numerically singular");
  return llt;
}

void check_tangent(const KernelSpec& spec, const Eigen::MatrixXd& q, const Eigen::MatrixXd& U) {
  spec.validate();
  if (q.cols() != spec.dim || U.rows() != q.rows() || U.cols() != q.cols())
    throw std::invalid_argument("landmarks: tangent vectors do not match the points");
}

}  // namespace

double quotient_metric(const KernelSpec& spec, const Eigen::MatrixXd& q, const Eigen::MatrixXd& U) {
  check_tangent(spec, q, U);
  const Eigen::VectorXd u = flatten(U);
  return u.dot(factor(spec, q).solve(u));
}

HorizontalLift horizontal_lift(const KernelSpec& spec, const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& U) {
  check_tangent(spec, q, U);
  const Eigen::VectorXd a = factor(spec, q).solve(flatten(U));
  return {spec, q, unflatten(a, q.rows(), q.cols())};
}

Eigen::VectorXd HorizontalLift::at(const double* x) const {
  const int d = spec.dim;
  const Eigen::Map<const Eigen::RowVectorXd> xv(x, d);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
  for (Index j = 0; j < q.rows(); ++j)
    u += spec.profile((xv - q.row(j)).norm()) * a.row(j).transpose();
  return u;
}

Eigen::MatrixXd HorizontalLift::at(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out(points.rows(), spec.dim);
  for (Index i = 0; i < points.rows(); ++i) {
    const Eigen::RowVectorXd x = points.row(i);
    out.row(i) = at(x.data()).transpose();
  }
  return out;
}

double HorizontalLift::norm2() const {
  const Eigen::VectorXd av = flatten(a);
  return av.dot(kernel_matrix(spec, q) * av);
}

void LandmarkMatchConfig::validate() const {
  if (!(sigma2 > 0)) throw std::invalid_argument("sigma2 must be > 0");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  if (!(tol_grad >= 0)) throw std::invalid_argument("tol_grad must be >= 0");
  if (!(fd_eps > 0)) throw std::invalid_argument("fd_eps must be > 0");
}

LandmarkMatchResult landmark_match(const Eigen::MatrixXd& q0, const Eigen::MatrixXd& target,
                                   const KernelSpec& spec, const LandmarkMatchConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (q0.rows() != target.rows() || q0.cols() != target.cols())
    throw std::invalid_argument("landmark_match: source and target sizes differ");
  if (q0.cols() != spec.dim) throw std::invalid_argument("landmark_match: point dimension mismatch");
  require_distinct(spec, q0);
  const Index n = q0.rows(), d = q0.cols();
  const Eigen::MatrixXd K0 = kernel_matrix(spec, q0);

  auto endpoint = [&](const Eigen::MatrixXd& p) {
    return landmark_shoot({spec, q0, p}, cfg.n_steps, false).q.back();
  };
  auto terms = [&](const Eigen::VectorXd& x, double& kinetic, double& mismatch) {
    kinetic = 0.5 * x.dot(K0 * x);
    mismatch = (endpoint(unflatten(x, n, d)) - target).squaredNorm() / (2 * cfg.sigma2);
  };
  const Objective f = [&](const Eigen::VectorXd& x) {
    double k, m;
    terms(x, k, m);
    return k + m;
  };
  const GradientFn grad = [&](const Eigen::VectorXd& x) { return fd_gradient(f, x, cfg.fd_eps); };

  BfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.tol_grad = cfg.tol_grad;
  opt.initial_step = 1e-2 * kernel_width(spec);
  const BfgsResult br = bfgs_minimize(f, grad, Eigen::VectorXd::Zero(n * d), opt);

  LandmarkMatchResult res;
  res.p0 = unflatten(br.x, n, d);
  res.trajectory = landmark_shoot({spec, q0, res.p0}, cfg.n_steps);
  res.trace = br.trace;
  terms(br.x, res.kinetic, res.mismatch);
  res.endpoint_error = (res.trajectory.q.back() - target).rowwise().norm().maxCoeff();
  res.iterations = br.iterations;
  res.converged = br.converged;
  res.line_search_failed = br.line_search_failed;
  res.message = br.message;
  return res;
}

}  // namespace diffeo
