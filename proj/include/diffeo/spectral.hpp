// Discrete Fourier machinery on periodic grids: transforms, Fourier
// multipliers, spectral derivatives, low-pass filtering and trigonometric
// interpolation at scattered points.
#pragma once

#include <Eigen/Core>
#include <complex>
#include <memory>

#include "diffeo/grid.hpp"

namespace diffeo {

class Spectral {
 public:
  explicit Spectral(const Grid& g);

  const Grid& grid() const { return grid_; }

  /// Unnormalised forward DFT over all axes.
  Eigen::VectorXcd forward(const Eigen::VectorXd& f) const;
  /// Inverse DFT (with the 1/N factor); returns the real part.
  Eigen::VectorXd inverse(const Eigen::VectorXcd& c) const;
  Eigen::VectorXcd forward_complex(const Eigen::VectorXcd& f) const;
  /// Inverse DFT with the 1/N factor, keeping the imaginary part.
  Eigen::VectorXcd inverse_complex(const Eigen::VectorXcd& c) const;

  /// Angular wavenumber xi_a = 2 pi m / (n h) of every node of the spectrum.
  const Eigen::ArrayXd& wavenumber(int axis) const { return xi_[axis]; }
  /// Same as wavenumber() with the Nyquist mode zeroed, so odd multipliers
  /// keep real fields real.
  const Eigen::ArrayXd& derivative_wavenumber(int axis) const { return dxi_[axis]; }
  const Eigen::ArrayXd& wavenumber_squared() const { return xi2_; }
  /// Largest |m_a| / (n_a / 2) over axes, per spectral node.
  const Eigen::ArrayXd& relative_frequency() const { return rel_; }

  /// f -> IDFT(symbol * DFT(f)).
  Eigen::VectorXd multiply(const Eigen::VectorXd& f, const Eigen::ArrayXd& symbol) const;

  Eigen::VectorXd derivative(const Eigen::VectorXd& f, int axis) const;
  VectorField gradient(const ScalarField& f) const;
  ScalarField divergence(const VectorField& v) const;
  /// Jacobian columns: out[b] holds d v / d x_b for all components.
  std::array<Eigen::MatrixXd, 3> jacobian(const VectorField& v) const;

  /// Zeroes every mode whose relative frequency exceeds 1 - cut on some axis;
  /// cut = 1/3 is the two-thirds rule. cut <= 0 leaves f untouched.
  Eigen::VectorXd low_pass(const Eigen::VectorXd& f, double cut) const;

  /// Trigonometric interpolant of f evaluated at the rows of `points`.
  Eigen::VectorXd interpolate_at(const Eigen::VectorXd& f, const Eigen::MatrixXd& points) const;
  /// Column-wise interpolate_at sharing the exponential tables.
  Eigen::MatrixXd interpolate_columns(const Eigen::MatrixXd& f, const Eigen::MatrixXd& points) const;

 private:
  struct Plans;

  Grid grid_;
  std::shared_ptr<const Plans> plans_;
  std::array<Eigen::ArrayXd, 3> xi_;
  std::array<Eigen::ArrayXd, 3> dxi_;
  Eigen::ArrayXd xi2_;
  Eigen::ArrayXd rel_;
};

}  // namespace diffeo
