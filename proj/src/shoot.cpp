#include "diffeo/shoot.hpp"

#include <Eigen/LU>
#include <cmath>
#include <complex>

#include "diffeo/optim.hpp"

namespace diffeo {

using Complex = std::complex<double>;

void ShootConfig::validate() const {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (!(filter >= 0 && filter < 1)) throw std::invalid_argument("filter must be in [0, 1)");
  if (snapshot_every < 1) throw std::invalid_argument("snapshot_every must be >= 1");
}

void ShootMatchConfig::validate() const {
  match.validate();
  shoot.validate();
  if (p0_basis < 4) throw std::invalid_argument("p0_basis must be >= 4");
  if (opt_steps < 1) throw std::invalid_argument("opt_steps must be >= 1");
  if (!(active_threshold >= 0 && active_threshold < 1))
    throw std::invalid_argument("active_threshold must be in [0, 1)");
  if (!(fd_eps > 0)) throw std::invalid_argument("fd_eps must be > 0");
}

namespace {

// Spectral operator bundle for one grid and kernel. Real fields are
// transformed two at a time as the real and imaginary parts of one complex
// field; symbols that are real and even act on both halves independently.
class Ops {
 public:
  Ops(const GridKernel& k, double cut) : sp_(k.spectral()), g_(k.grid()) {
    const Eigen::ArrayXd& rel = sp_.relative_frequency();
    mask_ = Eigen::ArrayXd::Ones(rel.size());
    if (cut > 0)
      for (Index i = 0; i < rel.size(); ++i)
        if (rel[i] > 1.0 - cut + 1e-12) mask_[i] = 0;
    for (int a = 0; a < g_.dim; ++a)
      ixi_[a] = sp_.derivative_wavenumber(a).cast<Complex>() * Complex(0, 1);
    k_hat_ = k.k_symbol();
    max_speed_ = 10.0 * g_.spacing;
    neg_.resize(g_.size());
    for (Index i = 0; i < g_.size(); ++i) {
      auto idx = g_.unravel(i);
      for (int a = 0; a < g_.dim; ++a) idx[a] = (g_.extent[a] - idx[a]) % g_.extent[a];
      neg_[i] = g_.ravel(idx);
    }
  }

  const Grid& grid() const { return g_; }
  Eigen::VectorXcd fwd(const Eigen::VectorXd& f) const { return sp_.forward(f); }
  Eigen::VectorXd inv(const Eigen::VectorXcd& c) const { return sp_.inverse(c); }

  /// Spectra of the columns of f.
  std::vector<Eigen::VectorXcd> fwd_cols(const Eigen::MatrixXd& f) const {
    std::vector<Eigen::VectorXcd> out(size_t(f.cols()));
    Index c = 0;
    for (; c + 1 < f.cols(); c += 2) {
      const Eigen::VectorXcd z = sp_.forward_complex(
          f.col(c).cast<Complex>() + Complex(0, 1) * f.col(c + 1).cast<Complex>());
      Eigen::VectorXcd& A = out[size_t(c)];
      Eigen::VectorXcd& B = out[size_t(c + 1)];
      A.resize(z.size());
      B.resize(z.size());
      for (Index i = 0; i < z.size(); ++i) {
        const Complex zc = std::conj(z[neg_[i]]);
        A[i] = 0.5 * (z[i] + zc);
        B[i] = Complex(0, -0.5) * (z[i] - zc);
      }
    }
    if (c < f.cols()) out[size_t(c)] = fwd(f.col(c));
    return out;
  }

  /// Real inverse transforms of Hermitian spectra, as columns.
  Eigen::MatrixXd inv_cols(const std::vector<Eigen::VectorXcd>& spectra) const {
    const Index n = g_.size();
    Eigen::MatrixXd out(n, Index(spectra.size()));
    size_t c = 0;
    for (; c + 1 < spectra.size(); c += 2) {
      const Eigen::VectorXcd z = sp_.inverse_complex(spectra[c] + Complex(0, 1) * spectra[c + 1]);
      out.col(Index(c)) = z.real();
      out.col(Index(c + 1)) = z.imag();
    }
    if (c < spectra.size()) out.col(Index(c)) = inv(spectra[c]);
    return out;
  }

  Eigen::VectorXcd deriv_hat(const Eigen::VectorXcd& c, int b) const {
    return (c.array() * ixi_[b]).matrix();
  }
  Eigen::VectorXcd k_hat(const Eigen::VectorXcd& c) const { return (c.array() * k_hat_).matrix(); }

  /// Columns of D f, i.e. d f / d x_b for b < d.
  Eigen::MatrixXd gradient(const Eigen::VectorXcd& fh) const {
    std::vector<Eigen::VectorXcd> parts;
    for (int b = 0; b < g_.dim; ++b) parts.push_back(deriv_hat(fh, b));
    return inv_cols(parts);
  }
  /// K applied to each column of m.
  Eigen::MatrixXd apply_k(const Eigen::MatrixXd& m) const {
    auto parts = fwd_cols(m);
    for (auto& p : parts) p = k_hat(p);
    return inv_cols(parts);
  }
  Eigen::MatrixXd smooth_columns(const Eigen::MatrixXd& f) const {
    auto parts = fwd_cols(f);
    for (auto& p : parts) p = (p.array() * mask_).matrix();
    return inv_cols(parts);
  }

  void guard(const Eigen::MatrixXd& u) const {
    if (!u.allFinite()) throw BlowUpError("shoot: non-finite velocity");
    const double speed = u.rowwise().norm().maxCoeff();
    if (speed > max_speed_)
      throw BlowUpError("shoot: velocity exceeds one grid cell per 0.1 time units");
  }

  // d(disp)/dt = -u - (D disp) u
  Eigen::MatrixXd inverse_map_rate(const Eigen::MatrixXd& disp, const Eigen::MatrixXd& u) const {
    const int d = g_.dim;
    const auto h = fwd_cols(disp);
    std::vector<Eigen::VectorXcd> parts;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) parts.push_back(deriv_hat(h[size_t(a)], b));
    const Eigen::MatrixXd D = inv_cols(parts);
    Eigen::MatrixXd rate = -u;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) rate.col(a) -= D.col(a * d + b).cwiseProduct(u.col(b));
    return rate;
  }

 private:
  const Spectral& sp_;
  Grid g_;
  Eigen::ArrayXd mask_;
  Eigen::ArrayXd k_hat_;
  std::array<Eigen::ArrayXcd, 3> ixi_;
  std::vector<Index> neg_;
  double max_speed_;
};

double l_norm2(const Grid& g, const Eigen::MatrixXd& u, const Eigen::MatrixXd& m) {
  return g.cell_volume() * u.cwiseProduct(m).sum();
}

struct ImageState {
  Eigen::VectorXd I, P;
  Eigen::MatrixXd disp;
};

struct ImageRate {
  ImageState rate;
  Eigen::MatrixXd u, m;
};

ImageRate image_rhs(const Ops& ops, const ImageState& s, bool track) {
  const int d = ops.grid().dim;
  ImageRate r;
  const Eigen::MatrixXd grad = ops.gradient(ops.fwd(s.I));
  r.m = -(grad.array().colwise() * s.P.array()).matrix();
  r.u = ops.apply_k(r.m);
  ops.guard(r.u);
  r.rate.I = -(grad.cwiseProduct(r.u)).rowwise().sum();
  const auto flux = ops.fwd_cols((r.u.array().colwise() * s.P.array()).matrix());
  Eigen::VectorXcd div = Eigen::VectorXcd::Zero(s.P.size());
  for (int a = 0; a < d; ++a) div += ops.deriv_hat(flux[size_t(a)], a);
  r.rate.P = -ops.inv(div);
  if (track) r.rate.disp = ops.inverse_map_rate(s.disp, r.u);
  return r;
}

void filter_image_state(const Ops& ops, ImageState& s) {
  Eigen::MatrixXd IP(s.I.size(), 2);
  IP << s.I, s.P;
  IP = ops.smooth_columns(IP);
  s.I = IP.col(0);
  s.P = IP.col(1);
}

ImageState axpy(const ImageState& s, double h, const ImageState& r, bool track) {
  ImageState out{s.I + h * r.I, s.P + h * r.P, Eigen::MatrixXd()};
  if (track) out.disp = s.disp + h * r.disp;
  return out;
}

// One RK4 step followed by the low-pass filter. Returns the rate at the
// start of the step (its u and m describe the incoming state).
ImageRate image_step(const Ops& ops, ImageState& s, double dt, bool track) {
  ImageRate r1 = image_rhs(ops, s, track);
  const ImageRate r2 = image_rhs(ops, axpy(s, 0.5 * dt, r1.rate, track), track);
  const ImageRate r3 = image_rhs(ops, axpy(s, 0.5 * dt, r2.rate, track), track);
  const ImageRate r4 = image_rhs(ops, axpy(s, dt, r3.rate, track), track);
  s.I += dt / 6 * (r1.rate.I + 2 * r2.rate.I + 2 * r3.rate.I + r4.rate.I);
  s.P += dt / 6 * (r1.rate.P + 2 * r2.rate.P + 2 * r3.rate.P + r4.rate.P);
  filter_image_state(ops, s);
  if (track) {
    s.disp += dt / 6 * (r1.rate.disp + 2 * r2.rate.disp + 2 * r3.rate.disp + r4.rate.disp);
    s.disp = ops.smooth_columns(s.disp);
  }
  return r1;
}

struct MomentumState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd disp;
};

struct MomentumRate {
  MomentumState rate;
  Eigen::MatrixXd u;
};

MomentumRate momentum_rhs(const Ops& ops, const MomentumState& s, bool track) {
  const int d = ops.grid().dim;
  const Index n = ops.grid().size();
  const auto mh = ops.fwd_cols(s.m);
  std::vector<Eigen::VectorXcd> uh;
  for (int a = 0; a < d; ++a) uh.push_back(ops.k_hat(mh[size_t(a)]));
  MomentumRate r;
  r.u = ops.inv_cols(uh);
  ops.guard(r.u);
  // column a*d + b holds d u_a / d x_b, then d m_a / d x_b
  std::vector<Eigen::VectorXcd> parts;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) parts.push_back(ops.deriv_hat(uh[size_t(a)], b));
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) parts.push_back(ops.deriv_hat(mh[size_t(a)], b));
  const Eigen::MatrixXd D = ops.inv_cols(parts);
  const Index dm = Index(d) * d;
  Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
  for (int a = 0; a < d; ++a) div += D.col(a * d + a);
  r.rate.m.resize(n, d);
  for (int a = 0; a < d; ++a) {
    Eigen::VectorXd acc = div.cwiseProduct(s.m.col(a));
    for (int b = 0; b < d; ++b) {
      acc += D.col(dm + a * d + b).cwiseProduct(r.u.col(b));
      acc += D.col(b * d + a).cwiseProduct(s.m.col(b));
    }
    r.rate.m.col(a) = -acc;
  }
  if (track) r.rate.disp = ops.inverse_map_rate(s.disp, r.u);
  return r;
}

MomentumState axpy(const MomentumState& s, double h, const MomentumState& r, bool track) {
  MomentumState out{s.m + h * r.m, Eigen::MatrixXd()};
  if (track) out.disp = s.disp + h * r.disp;
  return out;
}

MomentumRate momentum_step(const Ops& ops, MomentumState& s, double dt, bool track) {
  MomentumRate r1 = momentum_rhs(ops, s, track);
  const MomentumRate r2 = momentum_rhs(ops, axpy(s, 0.5 * dt, r1.rate, track), track);
  const MomentumRate r3 = momentum_rhs(ops, axpy(s, 0.5 * dt, r2.rate, track), track);
  const MomentumRate r4 = momentum_rhs(ops, axpy(s, dt, r3.rate, track), track);
  s.m += dt / 6 * (r1.rate.m + 2 * r2.rate.m + 2 * r3.rate.m + r4.rate.m);
  s.m = ops.smooth_columns(s.m);
  if (track) {
    s.disp += dt / 6 * (r1.rate.disp + 2 * r2.rate.disp + 2 * r3.rate.disp + r4.rate.disp);
    s.disp = ops.smooth_columns(s.disp);
  }
  return r1;
}

}  // namespace

Shooter::Shooter(const KernelSpec& spec, const Grid& g, ShootConfig cfg)
    : grid_(g), kernel_(spec, g), cfg_(cfg) {
  cfg_.validate();
}

VectorField Shooter::momentum(const Image& I, const ImageMomentum& P) const {
  require_same_grid(I.grid, grid_, "Shooter::momentum");
  require_same_grid(P.grid, grid_, "Shooter::momentum");
  VectorField m = kernel_.spectral().gradient(I);
  m.values = -(m.values.array().colwise() * P.values.array()).matrix();
  return m;
}

VectorField Shooter::velocity(const Image& I, const ImageMomentum& P) const {
  return kernel_.apply_K(momentum(I, P));
}

ShootTrajectory Shooter::shoot(const Image& I0, const ImageMomentum& P0) const {
  require_same_grid(I0.grid, grid_, "shoot");
  require_same_grid(P0.grid, grid_, "shoot");
  if (!I0.all_finite() || !P0.all_finite()) throw std::invalid_argument("shoot: non-finite input");
  const Ops ops(kernel_, cfg_.filter);
  const bool track = cfg_.track_inverse;
  const int n = cfg_.n_steps;
  const double dt = 1.0 / n;
  ImageState s{I0.values, P0.values, Eigen::MatrixXd()};
  filter_image_state(ops, s);
  if (track) s.disp = Eigen::MatrixXd::Zero(grid_.size(), grid_.dim);

  ShootTrajectory traj;
  auto store = [&](const ImageState& st, const Eigen::MatrixXd& u, double t) {
    traj.states.push_back({Image(grid_, st.I), ImageMomentum(grid_, st.P), VectorField(grid_, u), t});
    if (track) traj.inverse_displacement.push_back(st.disp);
  };
  for (int k = 0; k < n; ++k) {
    const ImageState before = s;
    const ImageRate r = image_step(ops, s, dt, track);
    traj.norms.push_back(l_norm2(grid_, r.u, r.m));
    if (k % cfg_.snapshot_every == 0) store(before, r.u, k * dt);
  }
  const ImageRate last = image_rhs(ops, s, false);
  traj.norms.push_back(l_norm2(grid_, last.u, last.m));
  store(s, last.u, 1.0);
  return traj;
}

Image Shooter::endpoint(const Image& I0, const ImageMomentum& P0) const {
  require_same_grid(I0.grid, grid_, "shoot");
  require_same_grid(P0.grid, grid_, "shoot");
  const Ops ops(kernel_, cfg_.filter);
  ImageState s{I0.values, P0.values, Eigen::MatrixXd()};
  filter_image_state(ops, s);
  const double dt = 1.0 / cfg_.n_steps;
  for (int k = 0; k < cfg_.n_steps; ++k) image_step(ops, s, dt, false);
  return Image(grid_, s.I);
}

EpdiffTrajectory Shooter::shoot_epdiff(const VectorField& m0) const {
  require_same_grid(m0.grid, grid_, "shoot_epdiff");
  if (!m0.all_finite()) throw std::invalid_argument("shoot_epdiff: non-finite input");
  const Ops ops(kernel_, cfg_.filter);
  const bool track = cfg_.track_inverse;
  const int n = cfg_.n_steps;
  const double dt = 1.0 / n;
  MomentumState s{ops.smooth_columns(m0.values), Eigen::MatrixXd()};
  if (track) s.disp = Eigen::MatrixXd::Zero(grid_.size(), grid_.dim);

  EpdiffTrajectory traj;
  auto store = [&](const MomentumState& st, const Eigen::MatrixXd& u, double t) {
    traj.m.emplace_back(grid_, st.m);
    traj.u.emplace_back(grid_, u);
    traj.t.push_back(t);
    if (track) traj.inverse_displacement.push_back(st.disp);
  };
  for (int k = 0; k < n; ++k) {
    const MomentumState before = s;
    const MomentumRate r = momentum_step(ops, s, dt, track);
    traj.norms.push_back(l_norm2(grid_, r.u, before.m));
    if (k % cfg_.snapshot_every == 0) store(before, r.u, k * dt);
  }
  const MomentumRate last = momentum_rhs(ops, s, false);
  traj.norms.push_back(l_norm2(grid_, last.u, s.m));
  store(s, last.u, 1.0);
  return traj;
}

VectorField Shooter::pullback_momentum(const VectorField& m, const Eigen::MatrixXd& disp) const {
  const int d = grid_.dim;
  const Spectral& sp = kernel_.spectral();
  const Eigen::MatrixXd psi = node_positions(grid_) + disp;
  const Eigen::MatrixXd mpsi = sp.interpolate_columns(m.values, psi);
  std::array<std::array<Eigen::VectorXd, 3>, 3> dd;
  for (int a = 0; a < d; ++a) {
    const Eigen::VectorXcd h = sp.forward(disp.col(a));
    for (int b = 0; b < d; ++b) {
      dd[a][b] = sp.inverse((h.array() * sp.derivative_wavenumber(b).cast<Complex>() *
                             Complex(0, 1)).matrix());
    }
  }
  VectorField out(grid_);
  Eigen::MatrixXd J(d, d);
  for (Index i = 0; i < grid_.size(); ++i) {
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) J(a, b) = (a == b ? 1.0 : 0.0) + dd[a][b][i];
    out.values.row(i) = (J.determinant() * J.transpose() * mpsi.row(i).transpose()).transpose();
  }
  return out;
}

namespace {

std::vector<double> residual_series(const Shooter& sh, const std::vector<VectorField>& m,
                                    const std::vector<Eigen::MatrixXd>& disp) {
  if (disp.size() != m.size())
    throw std::invalid_argument("conservation_residual: trajectory lacks the inverse map");
  std::vector<double> out;
  const double m0 = m.front().values.norm();
  for (size_t k = 0; k < m.size(); ++k) {
    if (m0 == 0) {
      out.push_back(m[k].values.norm());
      continue;
    }
    const VectorField pulled = sh.pullback_momentum(m.front(), disp[k]);
    out.push_back((m[k].values - pulled.values).norm() / m0);
  }
  return out;
}

}  // namespace

std::vector<double> Shooter::conservation_residual(const ShootTrajectory& traj) const {
  std::vector<VectorField> m;
  for (const auto& s : traj.states) m.push_back(momentum(s.I, s.P));
  return residual_series(*this, m, traj.inverse_displacement);
}

std::vector<double> Shooter::conservation_residual(const EpdiffTrajectory& traj) const {
  return residual_series(*this, traj.m, traj.inverse_displacement);
}

ShootTrajectory shoot(const Image& I0, const ImageMomentum& P0, const KernelSpec& spec,
                      const ShootConfig& cfg) {
  return Shooter(spec, I0.grid, cfg).shoot(I0, P0);
}

EpdiffTrajectory shoot_epdiff(const VectorField& m0, const KernelSpec& spec,
                              const ShootConfig& cfg) {
  return Shooter(spec, m0.grid, cfg).shoot_epdiff(m0);
}

ShootEnergy shooting_energy(const Shooter& shooter, const ImageMomentum& P0, const Image& I0,
                            const Image& I_target, double sigma2) {
  if (!(sigma2 > 0)) throw std::invalid_argument("sigma2 must be > 0");
  ShootEnergy e;
  const VectorField m0 = shooter.momentum(I0, P0);
  const VectorField u0 = shooter.kernel().apply_K(m0);
  e.kinetic = 0.5 * l2_inner(m0, u0);
  const Image I1 = shooter.endpoint(I0, P0);
  e.mismatch = l2_mismatch(I1, I_target) / (2 * sigma2);
  e.total = e.kinetic + e.mismatch;
  return e;
}

namespace {

double cubic_bspline(double t) {
  t = std::abs(t);
  if (t < 1) return 2.0 / 3.0 - t * t + 0.5 * t * t * t;
  if (t < 2) return (2 - t) * (2 - t) * (2 - t) / 6.0;
  return 0;
}

}  // namespace

Eigen::MatrixXd coarse_basis(const Grid& g, int coarse) {
  if (coarse < 4) throw std::invalid_argument("p0_basis must be >= 4");
  const int d = g.dim;
  const double L = g.length(0);
  for (int a = 1; a < d; ++a)
    if (std::abs(g.length(a) - L) > 1e-9 * L)
      throw std::invalid_argument("coarse_basis: grid must be a cube");
  const double H = L / coarse;
  std::array<int, 3> ce{1, 1, 1};
  for (int a = 0; a < d; ++a) ce[a] = coarse;
  const Grid cg(d, ce, H);
  Eigen::MatrixXd B(g.size(), cg.size());
  for (Index j = 0; j < cg.size(); ++j) {
    const auto cj = cg.unravel(j);
    for (Index i = 0; i < g.size(); ++i) {
      double w = 1;
      for (int a = 0; a < d && w != 0; ++a) {
        double t = (g.coord(i, a) - cj[a] * H) / H;
        t -= coarse * std::round(t / coarse);  // periodic distance in coarse cells
        w *= cubic_bspline(t);
      }
      B(i, j) = w;
    }
  }
  return B;
}

ShootMatchResult optimize_P0(const Image& I0, const Image& I_target, const KernelSpec& spec,
                             const ShootMatchConfig& cfg) {
  cfg.validate();
  require_same_grid(I0.grid, I_target.grid, "optimize_P0");
  const Grid& g = I0.grid;
  double cell = g.length(0);
  for (int a = 1; a < g.dim; ++a) cell = std::min(cell, g.length(a));
  const AdmissibilityReport rep = admissibility_report(spec, cell);
  if (!rep.pass) throw std::invalid_argument("kernel is not admissible: " + rep.reason);

  // keep only basis functions whose support meets the image edges
  const Eigen::MatrixXd B = coarse_basis(g, cfg.p0_basis);
  const Eigen::VectorXd gmag = image_gradient(I0).values.rowwise().norm();
  const double gmax = gmag.maxCoeff();
  std::vector<Index> active;
  for (Index j = 0; j < B.cols(); ++j) {
    double seen = 0;
    for (Index i = 0; i < g.size(); ++i)
      if (B(i, j) > 0) seen = std::max(seen, gmag[i]);
    if (gmax > 0 && seen >= cfg.active_threshold * gmax) active.push_back(j);
  }
  Eigen::MatrixXd A(g.size(), Index(active.size()));
  for (size_t j = 0; j < active.size(); ++j) A.col(Index(j)) = B.col(active[j]);

  ShootConfig opt_cfg = cfg.shoot;
  opt_cfg.n_steps = cfg.opt_steps;
  opt_cfg.track_inverse = false;
  const Shooter coarse_shooter(spec, g, opt_cfg);
  const Shooter shooter(spec, g, cfg.shoot);
  const double sigma2 = cfg.match.sigma2;

  const Objective f = [&](const Eigen::VectorXd& c) {
    return shooting_energy(coarse_shooter, ImageMomentum(g, A * c), I0, I_target, sigma2).total;
  };
  const GradientFn grad = [&](const Eigen::VectorXd& c) { return fd_gradient(f, c, cfg.fd_eps); };

  BfgsOptions opt;
  opt.max_iters = cfg.match.max_iters;
  opt.tol_grad = cfg.match.tol_grad;
  opt.armijo_c = cfg.match.armijo_c;
  opt.initial_step = cfg.match.step0;
  const BfgsResult br = bfgs_minimize(f, grad, Eigen::VectorXd::Zero(A.cols()), opt);

  ShootMatchResult res;
  res.active_coefficients = int(active.size());
  res.P0 = ImageMomentum(g, A * br.x);
  res.trace = br.trace;
  res.iterations = br.iterations;
  res.converged = br.converged;
  res.line_search_failed = br.line_search_failed;
  res.message = br.message;
  res.initial_energy = shooting_energy(shooter, ImageMomentum(g), I0, I_target, sigma2);
  res.trajectory = shooter.shoot(I0, res.P0);
  const Image& I1 = res.trajectory.states.back().I;
  res.final_energy.kinetic = 0.5 * res.trajectory.norms.front();
  res.final_energy.mismatch = l2_mismatch(I1, I_target) / (2 * sigma2);
  res.final_energy.total = res.final_energy.kinetic + res.final_energy.mismatch;
  res.initial_mismatch = l2_mismatch(I0, I_target);
  res.final_mismatch = l2_mismatch(I1, I_target);
  if (cfg.shoot.track_inverse) res.residuals = shooter.conservation_residual(res.trajectory);
  return res;
}

}  // namespace diffeo
