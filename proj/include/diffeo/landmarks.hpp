// Landmark geodesics: momenta concentrated on N points.
//
//   u(x) = sum_j k(|x - q_j|) p_j
//   H(q, p) = 1/2 sum_ij k(|q_i - q_j|) p_i . p_j
//   dq_i/dt = u(q_i),   dp_i/dt = -dH/dq_i
//
// Points and momenta are N x d matrices, one landmark per row.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "diffeo/kernels.hpp"

namespace diffeo {

/// Raised when two landmarks coincide, making the kernel matrix singular.
struct SingularConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LandmarkState {
  KernelSpec kernel;
  Eigen::MatrixXd q;
  Eigen::MatrixXd p;

  /// N >= 1, matching shapes, finite entries.
  void validate() const;
};

/// k'(r) / r for the kernel profile; the limit k''(0) at r = 0.
double profile_slope_over_r(const KernelSpec& spec, double r);

double hamiltonian(const LandmarkState& s);
/// dH/dp = velocity at the landmarks.
Eigen::MatrixXd landmark_velocity(const KernelSpec& spec, const Eigen::MatrixXd& q,
                                  const Eigen::MatrixXd& p);
/// dH/dq
Eigen::MatrixXd hamiltonian_gradient_q(const KernelSpec& spec, const Eigen::MatrixXd& q,
                                       const Eigen::MatrixXd& p);

struct LandmarkTrajectory {
  std::vector<double> t;
  std::vector<Eigen::MatrixXd> q;
  std::vector<Eigen::MatrixXd> p;
  /// D phi_t at the initial landmark positions, one row-major d x d block per
  /// row (empty when not tracked).
  std::vector<Eigen::MatrixXd> jacobian;
  std::vector<double> energy;
};

/// RK4 on [0, 1] with n_steps uniform steps; every state is stored.
LandmarkTrajectory landmark_shoot(const LandmarkState& s0, int n_steps,
                                  bool track_jacobian = true);

/// max_i |D phi_t(q_i(0))^T p_i(t) - p_i(0)| / max_i |p_i(0)| per state.
std::vector<double> landmark_conservation_residual(const LandmarkTrajectory& traj);

/// Throws SingularConfigurationError if two points are closer than 1e-9 kernel
/// widths or the kernel matrix fails its Cholesky factorisation.
void require_distinct(const KernelSpec& spec, const Eigen::MatrixXd& q);

/// U^T K(q)^{-1} U for tangent vectors U (rows) at the landmarks.
double quotient_metric(const KernelSpec& spec, const Eigen::MatrixXd& q, const Eigen::MatrixXd& U);

/// u(x) = sum_j K(x, q_j) a_j, the minimal-norm field with u(q_i) = U_i.
struct HorizontalLift {
  KernelSpec spec;
  Eigen::MatrixXd q;
  Eigen::MatrixXd a;

  Eigen::VectorXd at(const double* x) const;
  /// Velocities at the rows of `points`.
  Eigen::MatrixXd at(const Eigen::MatrixXd& points) const;
  /// |u|_H^2 = a^T K(q) a
  double norm2() const;
};

HorizontalLift horizontal_lift(const KernelSpec& spec, const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& U);

struct LandmarkMatchConfig {
  double sigma2 = 1e-4;
  int n_steps = 100;
  int max_iters = 200;
  double tol_grad = 1e-6;
  double fd_eps = 1e-7;

  void validate() const;
};

struct LandmarkMatchResult {
  Eigen::MatrixXd p0;
  LandmarkTrajectory trajectory;
  /// Objective after every accepted iterate.
  std::vector<double> trace;
  double kinetic = 0;
  double mismatch = 0;
  /// max_i |q_i(1) - target_i|
  double endpoint_error = 0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::string message;
};

/// Minimises 1/2 p^T K(q0) p + 1/(2 sigma^2) |q_1(p) - target|^2 by BFGS on
/// central-difference gradients. Optimiser failures return the best iterate
/// with `message` set.
LandmarkMatchResult landmark_match(const Eigen::MatrixXd& q0, const Eigen::MatrixXd& target,
                                   const KernelSpec& spec, const LandmarkMatchConfig& cfg);

}  // namespace diffeo
