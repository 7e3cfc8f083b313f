#include "diffeo/kernels.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace diffeo {

namespace {

// Gaussian multipliers are floored at this fraction of their peak so that L
// stays finite and K L = Id holds to rounding on every mode.
constexpr double kSymbolFloor = 1e-12;

double squared_distance(const double* x, const double* y, int d) {
  double r2 = 0;
  for (int a = 0; a < d; ++a) r2 += (x[a] - y[a]) * (x[a] - y[a]);
  return r2;
}

}  // namespace

KernelSpec KernelSpec::gaussian(double lambda, int dim) {
  KernelSpec s;
  s.kind = KernelKind::gaussian;
  s.lambda = lambda;
  s.dim = dim;
  s.validate();
  return s;
}

KernelSpec KernelSpec::sobolev(double alpha, int order, int dim) {
  KernelSpec s;
  s.kind = KernelKind::sobolev;
  s.alpha = alpha;
  s.order = order;
  s.dim = dim;
  s.validate();
  return s;
}

void KernelSpec::validate() const {
  if (dim < 1 || dim > 3) throw std::invalid_argument("kernel dimension must be 1, 2 or 3");
  if (kind == KernelKind::gaussian) {
    if (!(lambda > 0) || !std::isfinite(lambda))
      throw std::invalid_argument("kernel_lambda must be > 0");
  } else {
    if (!(alpha > 0) || !std::isfinite(alpha))
      throw std::invalid_argument("kernel_alpha must be > 0");
    if (order < 1) throw std::invalid_argument("kernel_order must be >= 1");
  }
}

double KernelSpec::profile(double r) const {
  if (kind == KernelKind::gaussian) return std::exp(-r * r / (2 * lambda * lambda));
  const double nu = order - 0.5 * dim;
  const double norm = std::pow(alpha, -dim) * std::pow(2.0, 1 - order) /
                      (std::pow(2 * std::numbers::pi, 0.5 * dim) * std::tgamma(double(order)));
  const double rho = std::abs(r) / alpha;
  if (rho == 0) {
    if (nu <= 0) return std::numeric_limits<double>::infinity();
    // limit rho^nu K_nu(rho) -> 2^(nu-1) Gamma(nu)
    return norm * std::pow(2.0, nu - 1) * std::tgamma(nu);
  }
  const double anu = std::abs(nu);  // K_{-nu} = K_nu
  return norm * std::pow(rho, nu) * std::cyl_bessel_k(anu, rho);
}

double KernelSpec::symbol(double xi_squared) const {
  if (kind == KernelKind::gaussian) {
    return std::pow(2 * std::numbers::pi * lambda * lambda, 0.5 * dim) *
           std::exp(-0.5 * lambda * lambda * xi_squared);
  }
  return std::pow(1 + alpha * alpha * xi_squared, -order);
}

bool KernelSpec::smooth_enough() const {
  if (kind == KernelKind::gaussian) return true;
  return order > 0.5 * dim + 1;
}

std::string KernelSpec::describe() const {
  std::ostringstream os;
  if (kind == KernelKind::gaussian) {
    os << "gaussian(lambda=" << lambda << ", d=" << dim << ")";
  } else {
    os << "sobolev(alpha=" << alpha << ", s=" << order << ", d=" << dim << ")";
  }
  return os.str();
}

Eigen::MatrixXd kernel_eval(const KernelSpec& spec, const double* x, const double* y) {
  const double k = spec.profile(std::sqrt(squared_distance(x, y, spec.dim)));
  return k * Eigen::MatrixXd::Identity(spec.dim, spec.dim);
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& q) {
  const int d = spec.dim;
  if (q.cols() != d) throw std::invalid_argument("kernel_matrix: point dimension mismatch");
  const Index n = q.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * d, n * d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      double r2 = (q.row(i) - q.row(j)).squaredNorm();
      const double v = spec.profile(std::sqrt(r2));
      for (int a = 0; a < d; ++a) {
        k(i * d + a, j * d + a) = v;
        k(j * d + a, i * d + a) = v;
      }
    }
  }
  return k;
}

double psd_tolerance(const Eigen::MatrixXd& k) {
  return -1e-10 * k.trace() / double(std::max<Index>(1, k.rows()));
}

AdmissibilityReport admissibility_report(const KernelSpec& spec, double cell_length) {
  spec.validate();
  AdmissibilityReport rep;
  rep.order_ok = spec.smooth_enough();

  // the profile is radial, so every line through the origin sees k(|t|)
  const double width = spec.kind == KernelKind::gaussian ? spec.lambda : spec.alpha;
  const double delta = 1e-3 * width;
  const int half = 6000;
  Eigen::ArrayXd line(2 * half + 1);
  for (int j = -half; j <= half; ++j) line[j + half] = spec.profile(std::abs(j * delta));
  rep.sup_k = line.abs().maxCoeff();
  for (int j = 1; j < 2 * half; ++j) {
    const double d1 = (line[j + 1] - line[j - 1]) / (2 * delta);
    const double d2 = (line[j + 1] - 2 * line[j] + line[j - 1]) / (delta * delta);
    rep.sup_dk = std::max(rep.sup_dk, std::abs(d1));
    rep.sup_d2k = std::max(rep.sup_d2k, std::abs(d2));
  }
  if (!std::isfinite(rep.sup_k)) rep.sup_dk = rep.sup_d2k = rep.sup_k;
  rep.norm_proxy = rep.sup_k + rep.sup_dk + rep.sup_d2k;

  if (cell_length > 0) {
    const double k0 = spec.profile(0);
    rep.decay_ratio = spec.profile(0.5 * cell_length) / k0;
    rep.decay_ok = std::isfinite(k0) && rep.decay_ratio <= 1e-2;
  }

  std::ostringstream why;
  if (!rep.order_ok) {
    why << "order s=" << spec.order << " must exceed d/2 + 1 = " << 0.5 * spec.dim + 1;
  } else if (!std::isfinite(rep.norm_proxy)) {
    why << "kernel derivatives are unbounded";
  } else if (!rep.decay_ok) {
    why << "kernel does not decay within half a periodic cell (ratio " << rep.decay_ratio << ")";
  }
  rep.reason = why.str();
  rep.pass = rep.order_ok && std::isfinite(rep.norm_proxy) && rep.decay_ok;
  return rep;
}

GridKernel::GridKernel(const KernelSpec& spec, const Grid& g) : spec_(spec), spectral_(g) {
  spec.validate();
  if (spec.dim != g.dim) throw std::invalid_argument("GridKernel: kernel and grid dimensions differ");
  const Eigen::ArrayXd& xi2 = spectral_.wavenumber_squared();
  k_hat_.resize(xi2.size());
  const double floor = kSymbolFloor * spec.symbol(0);
  for (Index i = 0; i < xi2.size(); ++i) k_hat_[i] = std::max(spec.symbol(xi2[i]), floor);
  l_hat_ = k_hat_.inverse();
}

Eigen::VectorXd GridKernel::apply_K(const Eigen::VectorXd& m) const {
  if (!m.allFinite()) throw std::invalid_argument("apply_K: non-finite input");
  return spectral_.multiply(m, k_hat_);
}

Eigen::VectorXd GridKernel::apply_L(const Eigen::VectorXd& u) const {
  if (!u.allFinite()) throw std::invalid_argument("apply_L: non-finite input");
  return spectral_.multiply(u, l_hat_);
}

VectorField GridKernel::apply_K(const VectorField& m) const {
  require_same_grid(grid(), m.grid, "apply_K");
  VectorField out(grid());
  for (int a = 0; a < grid().dim; ++a) out.values.col(a) = apply_K(Eigen::VectorXd(m.values.col(a)));
  return out;
}

VectorField GridKernel::apply_L(const VectorField& u) const {
  require_same_grid(grid(), u.grid, "apply_L");
  VectorField out(grid());
  for (int a = 0; a < grid().dim; ++a) out.values.col(a) = apply_L(Eigen::VectorXd(u.values.col(a)));
  return out;
}

double GridKernel::inner_L(const VectorField& u, const VectorField& v) const {
  const VectorField lv = apply_L(v);
  return grid().cell_volume() * u.values.cwiseProduct(lv.values).sum();
}

}  // namespace diffeo
