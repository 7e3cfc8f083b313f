// Reproducing kernels of the velocity space and the matching operators.
//
// Both kinds are translation invariant with a scalar profile k(|x - y|) times
// the identity. On periodic grids K and L are Fourier multipliers built from
// the continuous symbol of the profile, so they are exact inverses there.
#pragma once

#include <Eigen/Core>
#include <string>

#include "diffeo/grid.hpp"
#include "diffeo/spectral.hpp"

namespace diffeo {

enum class KernelKind { gaussian, sobolev };

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double lambda = 1.0;  // gaussian width
  double alpha = 1.0;   // sobolev length scale
  int order = 3;        // sobolev order s
  int dim = 2;

  KernelSpec() = default;
  static KernelSpec gaussian(double lambda, int dim);
  static KernelSpec sobolev(double alpha, int order, int dim);

  /// Throws std::invalid_argument on non-positive widths, orders or bad dims.
  void validate() const;

  /// Scalar profile k(r); +inf at r = 0 for sobolev orders s <= d/2.
  double profile(double r) const;
  /// Fourier transform of the profile over R^d at |xi|^2.
  double symbol(double xi_squared) const;
  /// True when the profile is C^2 with bounded derivatives (s > d/2 + 1).
  bool smooth_enough() const;
  std::string describe() const;
};

/// d x d kernel block K(x, y); x and y point to `spec.dim` coordinates.
Eigen::MatrixXd kernel_eval(const KernelSpec& spec, const double* x, const double* y);

/// (N d) x (N d) matrix of blocks K(q_i, q_j); points are rows of q.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& q);

/// Smallest eigenvalue allowed for a kernel matrix to count as PSD.
double psd_tolerance(const Eigen::MatrixXd& k);

struct AdmissibilityReport {
  bool pass = false;
  bool order_ok = false;
  bool decay_ok = true;
  /// Sampled sup-norms of the profile and its first two line derivatives.
  double sup_k = 0, sup_dk = 0, sup_d2k = 0;
  /// |K|_{2,inf} proxy: sup_k + sup_dk + sup_d2k.
  double norm_proxy = 0;
  /// k(cell / 2) / k(0), or 0 when no cell was given.
  double decay_ratio = 0;
  std::string reason;
};

/// Checks the smoothness condition s > d/2 + 1, estimates the C^2 sup-norms
/// by finite differences along sample lines and, when `cell_length` > 0,
/// requires k(cell/2) <= 1e-2 k(0) so the periodic images barely overlap.
AdmissibilityReport admissibility_report(const KernelSpec& spec, double cell_length = 0);

/// K and L as Fourier multipliers on one periodic grid.
class GridKernel {
 public:
  GridKernel(const KernelSpec& spec, const Grid& g);

  const KernelSpec& spec() const { return spec_; }
  const Grid& grid() const { return spectral_.grid(); }
  const Spectral& spectral() const { return spectral_; }
  /// Multipliers of K and L; their product is exactly one.
  const Eigen::ArrayXd& k_symbol() const { return k_hat_; }
  const Eigen::ArrayXd& l_symbol() const { return l_hat_; }

  VectorField apply_K(const VectorField& m) const;
  VectorField apply_L(const VectorField& u) const;
  Eigen::VectorXd apply_K(const Eigen::VectorXd& m) const;
  Eigen::VectorXd apply_L(const Eigen::VectorXd& u) const;

  /// <u, v>_L = h^d sum_i u_i . (L v)_i
  double inner_L(const VectorField& u, const VectorField& v) const;
  double norm2_L(const VectorField& u) const { return inner_L(u, u); }

 private:
  KernelSpec spec_;
  Spectral spectral_;
  Eigen::ArrayXd k_hat_;
  Eigen::ArrayXd l_hat_;
};

}  // namespace diffeo
