// Geodesic shooting on periodic grids.
//
// Image form:   dI/dt = -grad(I) . u,   dP/dt = -div(P u),   L u = -P grad(I)
// Momentum form: dm/dt = -(Dm u + Du^T m + div(u) m),   u = K m
//
// Sign convention: P_t is the negated transported image momentum, so that
// L u_t = -P_t grad(I_t) holds at every stored state.
//
// Spatial derivatives are spectral and every step ends with a low-pass
// filter that removes the top `filter` fraction of each axis spectrum. The
// inverse map psi_t = phi_t^{-1} = x + d_t is co-evolved through
// dd/dt = -u - (Dd) u, so the conserved momentum can be checked in the form
// m_t = Ad*_{psi_t} m_0.
#pragma once

#include <stdexcept>
#include <vector>

#include "diffeo/image.hpp"
#include "diffeo/kernels.hpp"
#include "diffeo/relax.hpp"

namespace diffeo {

struct ShootConfig {
  int n_steps = 64;
  double filter = 1.0 / 3.0;
  /// Store every k-th state (the final state is always stored).
  int snapshot_every = 1;
  /// Co-evolve the inverse map (needed for conservation residuals).
  bool track_inverse = true;

  void validate() const;
};

/// Raised when |u|_inf exceeds one grid cell per 0.1 time unit or the state
/// stops being finite.
struct BlowUpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShootState {
  Image I;
  ImageMomentum P;
  VectorField u;
  double t = 0;
};

struct ShootTrajectory {
  std::vector<ShootState> states;
  /// psi_t - x at the stored states (empty when not tracked).
  std::vector<Eigen::MatrixXd> inverse_displacement;
  /// |u_t|_L^2 at every step, including t = 0.
  std::vector<double> norms;
};

struct EpdiffTrajectory {
  std::vector<VectorField> m;
  std::vector<VectorField> u;
  std::vector<double> t;
  std::vector<Eigen::MatrixXd> inverse_displacement;
  std::vector<double> norms;
};

class Shooter {
 public:
  Shooter(const KernelSpec& spec, const Grid& g, ShootConfig cfg = {});

  const GridKernel& kernel() const { return kernel_; }
  const ShootConfig& config() const { return cfg_; }

  /// -P grad(I) with spectral derivatives.
  VectorField momentum(const Image& I, const ImageMomentum& P) const;
  /// K(-P grad(I))
  VectorField velocity(const Image& I, const ImageMomentum& P) const;

  ShootTrajectory shoot(const Image& I0, const ImageMomentum& P0) const;
  /// Final image only; skips snapshots and the inverse map.
  Image endpoint(const Image& I0, const ImageMomentum& P0) const;
  EpdiffTrajectory shoot_epdiff(const VectorField& m0) const;

  /// Ad*_psi m = det(D psi) D psi^T (m o psi) with psi = x + disp, spectral
  /// derivatives and trigonometric interpolation.
  VectorField pullback_momentum(const VectorField& m, const Eigen::MatrixXd& disp) const;

  /// ||m_t - Ad*_{psi_t} m_0|| / ||m_0|| for every stored state.
  std::vector<double> conservation_residual(const ShootTrajectory& traj) const;
  std::vector<double> conservation_residual(const EpdiffTrajectory& traj) const;

 private:
  Grid grid_;
  GridKernel kernel_;
  ShootConfig cfg_;
};

ShootTrajectory shoot(const Image& I0, const ImageMomentum& P0, const KernelSpec& spec,
                      const ShootConfig& cfg = {});
EpdiffTrajectory shoot_epdiff(const VectorField& m0, const KernelSpec& spec,
                              const ShootConfig& cfg = {});

struct ShootEnergy {
  double total = 0;
  double kinetic = 0;
  double mismatch = 0;
};

/// 1/2 <-P0 grad I0, K(-P0 grad I0)> + 1/(2 sigma^2) |I_1 - I_target|^2
ShootEnergy shooting_energy(const Shooter& shooter, const ImageMomentum& P0, const Image& I0,
                            const Image& I_target, double sigma2);

struct ShootMatchConfig {
  MatchConfig match;
  ShootConfig shoot;
  /// B-spline knots per axis of the P0 parameterisation (>= 4).
  int p0_basis = 8;
  /// Time steps used while optimising; the reported trajectory uses shoot.n_steps.
  int opt_steps = 16;
  /// Basis functions whose support sees less than this fraction of max |grad I0|
  /// are frozen at zero.
  double active_threshold = 1e-2;
  double fd_eps = 1e-6;

  void validate() const;
};

struct ShootMatchResult {
  ImageMomentum P0;
  ShootTrajectory trajectory;
  /// Objective after every accepted iterate (optimisation resolution).
  std::vector<double> trace;
  ShootEnergy initial_energy;
  ShootEnergy final_energy;
  std::vector<double> residuals;
  double initial_mismatch = 0;
  double final_mismatch = 0;
  int active_coefficients = 0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::string message;
};

/// Periodic tensor-product cubic B-splines centred on a coarse lattice with
/// `coarse` knots per axis, sampled on the fine grid. Returns the
/// fine-by-coarse matrix; columns sum to a partition of unity.
Eigen::MatrixXd coarse_basis(const Grid& g, int coarse);

ShootMatchResult optimize_P0(const Image& I0, const Image& I_target, const KernelSpec& spec,
                             const ShootMatchConfig& cfg);

}  // namespace diffeo
