// Time-dependent velocity fields and the deformations they generate.
//
// A path holds N_t + 1 frames at t_k = k / N_t and is linear in time between
// frames. Flows are integrated with one RK4 step per frame interval (or a
// fixed number of substeps) and semi-Lagrangian multilinear sampling.
#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

#include "diffeo/grid.hpp"

namespace diffeo {

class VelocityPath {
 public:
  VelocityPath() = default;
  /// n_time intervals of zero frames.
  VelocityPath(const Grid& g, int n_time);

  static VelocityPath constant(const VectorField& u, int n_time);

  const Grid& grid() const { return grid_; }
  int intervals() const { return int(frames_.size()) - 1; }
  double time(int k) const { return double(k) / intervals(); }

  VectorField& frame(int k) { return frames_[k]; }
  const VectorField& frame(int k) const { return frames_[k]; }

  /// Linear-in-time interpolation of the frames.
  Eigen::MatrixXd at(double t) const;

  bool all_finite() const;

  VelocityPath& operator+=(const VelocityPath& o);
  VelocityPath& operator-=(const VelocityPath& o);
  VelocityPath& operator*=(double s);
  friend VelocityPath operator+(VelocityPath a, const VelocityPath& b) { return a += b; }
  friend VelocityPath operator-(VelocityPath a, const VelocityPath& b) { return a -= b; }
  friend VelocityPath operator*(double s, VelocityPath a) { return a *= s; }

 private:
  void require_compatible(const VelocityPath& o) const;

  Grid grid_;
  std::vector<VectorField> frames_;
};

/// Sampled map x -> phi(x) stored as absolute (unwrapped) positions. The
/// displacement phi(x) - x is periodic.
struct DeformationField {
  Grid grid;
  Eigen::MatrixXd positions;

  DeformationField() = default;
  DeformationField(const Grid& g, Eigen::MatrixXd p);

  static DeformationField identity(const Grid& g);
  static DeformationField translation(const Grid& g, const Eigen::VectorXd& c);

  Eigen::MatrixXd displacement() const;
  /// phi(y) at an arbitrary point by interpolating the displacement.
  void evaluate(const double* y, double* out) const;
  bool all_finite() const { return positions.allFinite(); }
};

/// phi_{t,s}: the position at time t of the particle that sits at x at time s.
/// s and t must lie on the frame grid; t < s integrates backwards.
DeformationField integrate_flow(const VelocityPath& u, double s, double t, int substeps = 1);

/// One RK4 step of a particle from frame k to frame k +/- 1 (direction
/// given by the sign of dt). Frames a and b are the velocities at the start
/// and end of the step.
void rk4_particle_step(const Grid& g, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       double dt, double* y);

/// Node-wise phi(psi(x)).
DeformationField compose(const DeformationField& phi, const DeformationField& psi);

struct JacobianDeterminant {
  ScalarField det;
  double min = 0;
  Index nonpositive = 0;
  bool diffeomorphic() const { return nonpositive == 0; }
};

/// Central-difference Jacobian determinant of phi.
JacobianDeterminant jacobian_det(const DeformationField& phi);

/// Per node Jacobian matrices D phi, row-major d x d blocks in an N x d^2 array.
Eigen::MatrixXd jacobian_matrices(const DeformationField& phi);

/// Thrown when a map stops being a diffeomorphism (det D phi <= 0).
struct DiffeomorphismError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// psi with phi(psi(x)) = x, solved per node by damped Newton iteration on
/// the multilinear interpolant. Throws DiffeomorphismError when some node
/// does not reach |phi(psi(x)) - x| <= tol * h.
DeformationField invert_map(const DeformationField& phi, int max_iters = 200, double tol = 1e-12);

/// Sup-norm distance between two maps, measured on their periodic
/// displacements.
double map_distance(const DeformationField& a, const DeformationField& b);

}  // namespace diffeo
