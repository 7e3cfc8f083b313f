#include "diffeo/relax.hpp"

#include <cmath>
#include <stdexcept>

namespace diffeo {

void MatchConfig::validate() const {
  if (!(sigma2 > 0) || !std::isfinite(sigma2)) throw std::invalid_argument("sigma2 must be > 0");
  if (n_time < 2) throw std::invalid_argument("n_time must be >= 2");
  if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
  if (!(step0 > 0) || !std::isfinite(step0)) throw std::invalid_argument("step0 must be > 0");
  if (!(armijo_c > 0 && armijo_c < 1)) throw std::invalid_argument("armijo_c must be in (0, 1)");
  if (!(tol_grad >= 0)) throw std::invalid_argument("tol_grad must be >= 0");
}

double trapezoid_weight(int k, int n) { return (k == 0 || k == n) ? 0.5 / n : 1.0 / n; }

double path_inner(const VelocityPath& a, const VelocityPath& b, const GridKernel& kernel) {
  const int n = a.intervals();
  if (b.intervals() != n) throw std::invalid_argument("path_inner: time grids differ");
  double acc = 0;
  for (int k = 0; k <= n; ++k) acc += trapezoid_weight(k, n) * kernel.inner_L(a.frame(k), b.frame(k));
  return acc;
}

std::vector<double> frame_norms(const VelocityPath& u, const GridKernel& kernel) {
  std::vector<double> out;
  for (int k = 0; k <= u.intervals(); ++k) out.push_back(kernel.norm2_L(u.frame(k)));
  return out;
}

namespace {

void load_row(const Eigen::MatrixXd& m, Index i, int d, double* y) {
  for (int a = 0; a < d; ++a) y[a] = m(i, a);
}

void sample(const Grid& g, const Eigen::MatrixXd& v, const Stencil& s, double* out) {
  for (int a = 0; a < g.dim; ++a) {
    double acc = 0;
    for (int c = 0; c < s.count; ++c) acc += s.weight[c] * v(s.node[c], a);
    out[a] = acc;
  }
}

// lam += (D v(z))^T mu, with D v the gradient of the multilinear interpolant
void add_jacobian_transpose(const Grid& g, const Eigen::MatrixXd& v, const Stencil& s,
                            const double* mu, double scale, double* lam) {
  for (int c = 0; c < s.count; ++c) {
    double dot = 0;
    for (int a = 0; a < g.dim; ++a) dot += mu[a] * v(s.node[c], a);
    for (int b = 0; b < g.dim; ++b) lam[b] += scale * dot * s.dweight[c][b];
  }
}

void scatter(const Grid& g, const Stencil& s, const double* mu, double scale, Eigen::MatrixXd& G) {
  for (int c = 0; c < s.count; ++c)
    for (int a = 0; a < g.dim; ++a) G(s.node[c], a) += scale * s.weight[c] * mu[a];
}

// Reverse sweep through rk4_particle_step(g, fa, fb, dt, y). lam_out is the
// sensitivity of the step result; on return lam_y holds the sensitivity of
// y, and the velocity sensitivities are added to Ga and Gb.
void rk4_adjoint(const Grid& g, const Eigen::MatrixXd& fa, const Eigen::MatrixXd& fb, double dt,
                 const double* y, const double* lam_out, double* lam_y, Eigen::MatrixXd& Ga,
                 Eigen::MatrixXd& Gb) {
  const int d = g.dim;
  double k1[3], k2[3], k3[3], va[3], vb[3];
  double z2[3] = {0, 0, 0}, z3[3] = {0, 0, 0}, z4[3] = {0, 0, 0};
  const Stencil s1 = make_stencil(g, y);
  sample(g, fa, s1, k1);
  for (int i = 0; i < d; ++i) z2[i] = y[i] + 0.5 * dt * k1[i];
  const Stencil s2 = make_stencil(g, z2);
  sample(g, fa, s2, va);
  sample(g, fb, s2, vb);
  for (int i = 0; i < d; ++i) k2[i] = 0.5 * (va[i] + vb[i]);
  for (int i = 0; i < d; ++i) z3[i] = y[i] + 0.5 * dt * k2[i];
  const Stencil s3 = make_stencil(g, z3);
  sample(g, fa, s3, va);
  sample(g, fb, s3, vb);
  for (int i = 0; i < d; ++i) k3[i] = 0.5 * (va[i] + vb[i]);
  for (int i = 0; i < d; ++i) z4[i] = y[i] + dt * k3[i];
  const Stencil s4 = make_stencil(g, z4);

  double mu1[3], mu2[3], mu3[3], mu4[3];
  double lz4[3] = {0, 0, 0}, lz3[3] = {0, 0, 0}, lz2[3] = {0, 0, 0};
  for (int i = 0; i < d; ++i) {
    lam_y[i] = lam_out[i];
    mu4[i] = dt / 6 * lam_out[i];
  }
  scatter(g, s4, mu4, 1.0, Gb);
  add_jacobian_transpose(g, fb, s4, mu4, 1.0, lz4);
  for (int i = 0; i < d; ++i) {
    lam_y[i] += lz4[i];
    mu3[i] = dt / 3 * lam_out[i] + dt * lz4[i];
  }
  scatter(g, s3, mu3, 0.5, Ga);
  scatter(g, s3, mu3, 0.5, Gb);
  add_jacobian_transpose(g, fa, s3, mu3, 0.5, lz3);
  add_jacobian_transpose(g, fb, s3, mu3, 0.5, lz3);
  for (int i = 0; i < d; ++i) {
    lam_y[i] += lz3[i];
    mu2[i] = dt / 3 * lam_out[i] + 0.5 * dt * lz3[i];
  }
  scatter(g, s2, mu2, 0.5, Ga);
  scatter(g, s2, mu2, 0.5, Gb);
  add_jacobian_transpose(g, fa, s2, mu2, 0.5, lz2);
  add_jacobian_transpose(g, fb, s2, mu2, 0.5, lz2);
  for (int i = 0; i < d; ++i) {
    lam_y[i] += lz2[i];
    mu1[i] = dt / 6 * lam_out[i] + 0.5 * dt * lz2[i];
  }
  scatter(g, s1, mu1, 1.0, Ga);
  add_jacobian_transpose(g, fa, s1, mu1, 1.0, lam_y);
}

DeformationField trajectory_map(const Grid& g, const Eigen::MatrixXd& y0) { return {g, y0}; }

}  // namespace

RelaxProblem::RelaxProblem(Image I0, Image I1, const KernelSpec& spec, MatchConfig cfg)
    : I0_(std::move(I0)), I1_(std::move(I1)), kernel_(spec, I0_.grid), cfg_(cfg) {
  cfg_.validate();
  require_same_grid(I0_.grid, I1_.grid, "RelaxProblem");
  if (!I0_.all_finite() || !I1_.all_finite())
    throw std::invalid_argument("RelaxProblem: images must be finite");
}

RelaxProblem::Evaluation RelaxProblem::evaluate(const VelocityPath& u) const {
  require_same_grid(u.grid(), I0_.grid, "RelaxProblem::evaluate");
  if (!u.all_finite()) throw std::invalid_argument("RelaxProblem: non-finite velocity");
  const Grid& g = I0_.grid;
  const int n = u.intervals();
  Evaluation ev;
  ev.trajectory.assign(n + 1, Eigen::MatrixXd());
  ev.trajectory[n] = node_positions(g);
  for (int k = n - 1; k >= 0; --k) {
    Eigen::MatrixXd y = ev.trajectory[k + 1];
    const Eigen::MatrixXd& fa = u.frame(k + 1).values;
    const Eigen::MatrixXd& fb = u.frame(k).values;
    parallel_for(g.size(), [&](Index begin, Index end) {
      for (Index i = begin; i < end; ++i) {
        double p[3] = {0, 0, 0};
        load_row(y, i, g.dim, p);
        rk4_particle_step(g, fa, fb, -1.0 / n, p);
        for (int a = 0; a < g.dim; ++a) y(i, a) = p[a];
      }
    });
    ev.trajectory[k] = std::move(y);
  }
  ev.warped = deform_image(I0_, trajectory_map(g, ev.trajectory[0]));
  for (int k = 0; k <= n; ++k)
    ev.energy.kinetic += 0.5 * trapezoid_weight(k, n) * kernel_.norm2_L(u.frame(k));
  ev.energy.mismatch = l2_mismatch(ev.warped, I1_) / (2 * cfg_.sigma2);
  ev.energy.total = ev.energy.kinetic + ev.energy.mismatch;
  return ev;
}

VelocityPath RelaxProblem::gradient(const VelocityPath& u, const Evaluation& ev) const {
  const Grid& g = I0_.grid;
  const int d = g.dim;
  const int n = u.intervals();
  if (!jacobian_det(trajectory_map(g, ev.trajectory[0])).diffeomorphic())
    throw DiffeomorphismError("energy_gradient: phi_1^{-1} is not a diffeomorphism");

  // sensitivities of the mismatch to every particle position at t = 0
  const double hd = g.cell_volume();
  Eigen::MatrixXd lam(g.size(), d);
  for (Index i = 0; i < g.size(); ++i) {
    double y[3] = {0, 0, 0};
    load_row(ev.trajectory[0], i, d, y);
    const Stencil s = make_stencil(g, y);
    const double r = (ev.warped[i] - I1_[i]) * hd / cfg_.sigma2;
    for (int b = 0; b < d; ++b) {
      double acc = 0;
      for (int c = 0; c < s.count; ++c) acc += I0_[s.node[c]] * s.dweight[c][b];
      lam(i, b) = r * acc;
    }
  }

  std::vector<Eigen::MatrixXd> G(n + 1, Eigen::MatrixXd::Zero(g.size(), d));
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd& fa = u.frame(k + 1).values;
    const Eigen::MatrixXd& fb = u.frame(k).values;
    for (Index i = 0; i < g.size(); ++i) {
      double y[3] = {0, 0, 0}, lo[3] = {0, 0, 0}, ly[3] = {0, 0, 0};
      load_row(ev.trajectory[k + 1], i, d, y);
      load_row(lam, i, d, lo);
      rk4_adjoint(g, fa, fb, -1.0 / n, y, lo, ly, G[k + 1], G[k]);
      for (int a = 0; a < d; ++a) lam(i, a) = ly[a];
    }
  }

  VelocityPath grad(g, n);
  for (int k = 0; k <= n; ++k) {
    const double scale = 1.0 / (trapezoid_weight(k, n) * hd);
    VectorField f(g, G[k] * scale);
    grad.frame(k).values = u.frame(k).values + kernel_.apply_K(f).values;
  }
  return grad;
}

EnergyTerms energy(const VelocityPath& u, const Image& I0, const Image& I1, const KernelSpec& spec,
                   const MatchConfig& cfg) {
  return RelaxProblem(I0, I1, spec, cfg).evaluate(u).energy;
}

VelocityPath energy_gradient(const VelocityPath& u, const Image& I0, const Image& I1,
                             const KernelSpec& spec, const MatchConfig& cfg) {
  return RelaxProblem(I0, I1, spec, cfg).gradient(u);
}

VelocityPath energy_gradient_eulerian(const VelocityPath& u, const Image& I0, const Image& I1,
                                      const KernelSpec& spec, const MatchConfig& cfg) {
  cfg.validate();
  const Grid& g = I0.grid;
  const GridKernel kernel(spec, g);
  const int n = u.intervals();
  VelocityPath grad(g, n);
  for (int k = 0; k <= n; ++k) {
    const double t = u.time(k);
    const Image j0 = deform_image(I0, integrate_flow(u, t, 0.0));
    const DeformationField phi_1t = integrate_flow(u, t, 1.0);
    const Image j1 = deform_image(I1, phi_1t);
    const JacobianDeterminant jac = jacobian_det(phi_1t);
    if (!jac.diffeomorphic())
      throw DiffeomorphismError("energy_gradient_eulerian: phi_{1,t} is not a diffeomorphism");
    const Eigen::ArrayXd weight =
        jac.det.values.array() * (j0.values - j1.values).array() / cfg.sigma2;
    VectorField force = image_gradient(j0);
    force.values = (force.values.array().colwise() * weight).matrix();
    grad.frame(k).values = u.frame(k).values - kernel.apply_K(force).values;
  }
  return grad;
}

RelaxState optimize(const Image& I0, const Image& I1, const MatchConfig& cfg,
                    const KernelSpec& spec) {
  cfg.validate();
  const Grid& g = I0.grid;
  double cell = g.length(0);
  for (int a = 1; a < g.dim; ++a) cell = std::min(cell, g.length(a));
  const AdmissibilityReport rep = admissibility_report(spec, cell);
  if (!rep.pass) throw std::invalid_argument("kernel is not admissible: " + rep.reason);

  const RelaxProblem problem(I0, I1, spec, cfg);
  RelaxState st;
  st.u = VelocityPath(g, cfg.n_time);
  auto ev = problem.evaluate(st.u);
  st.initial_mismatch = l2_mismatch(I0, I1);
  st.trace.push_back({0, ev.energy.kinetic, ev.energy.mismatch, ev.energy.total, 0.0});

  double step = cfg.step0;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const VelocityPath grad = problem.gradient(st.u, ev);
    const double gn2 = path_inner(grad, grad, problem.kernel());
    st.gradient_norm = std::sqrt(std::max(0.0, gn2));
    if (st.gradient_norm <= cfg.tol_grad) {
      st.converged = true;
      break;
    }
    double s = step;
    bool accepted = false;
    while (s >= 1e-12 * cfg.step0) {
      VelocityPath cand = st.u - s * grad;
      if (cand.all_finite()) {
        auto cev = problem.evaluate(cand);
        const bool folds = !jacobian_det({g, cev.trajectory[0]}).diffeomorphic();
        if (!folds && std::isfinite(cev.energy.total) &&
            cev.energy.total <= ev.energy.total - cfg.armijo_c * s * gn2) {
          st.u = std::move(cand);
          ev = std::move(cev);
          accepted = true;
          break;
        }
      }
      s *= 0.5;
    }
    if (!accepted) {
      st.line_search_failed = true;
      st.message = "line search failed at iteration " + std::to_string(iter);
      break;
    }
    st.iterations = iter;
    st.trace.push_back({iter, ev.energy.kinetic, ev.energy.mismatch, ev.energy.total, s});
    step = 2 * s;
  }
  if (st.gradient_norm <= cfg.tol_grad) st.converged = true;

  st.phi1_inv = DeformationField(g, ev.trajectory[0]);
  st.phi1 = integrate_flow(st.u, 0.0, 1.0);
  st.warped = ev.warped;
  st.final_mismatch = l2_mismatch(st.warped, I1);
  if (!jacobian_det(st.phi1).diffeomorphic() || !jacobian_det(st.phi1_inv).diffeomorphic())
    throw DiffeomorphismError("optimize: final deformation is not a diffeomorphism");
  if (st.message.empty()) st.message = st.converged ? "converged" : "iteration limit reached";
  return st;
}

}  // namespace diffeo
