#include "diffeo/image.hpp"

#include <Eigen/LU>
#include <cmath>

#include "diffeo/spectral.hpp"

namespace diffeo {

Image deform_image(const Image& I, const DeformationField& phi_inv) {
  require_same_grid(I.grid, phi_inv.grid, "deform_image");
  const Grid& g = I.grid;
  Image out(g);
  parallel_for(g.size(), [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      double y[3] = {0, 0, 0};
      for (int a = 0; a < g.dim; ++a) y[a] = phi_inv.positions(i, a);
      out[i] = interpolate(I, y);
    }
  });
  return out;
}

VectorField image_gradient(const Image& I) {
  const Grid& g = I.grid;
  VectorField grad(g);
  const double inv2h = 0.5 / g.spacing;
  for (Index i = 0; i < g.size(); ++i)
    for (int a = 0; a < g.dim; ++a)
      grad.values(i, a) = (I[g.neighbour(i, a, 1)] - I[g.neighbour(i, a, -1)]) * inv2h;
  return grad;
}

Image infinitesimal_action(const VectorField& u, const Image& I) {
  require_same_grid(u.grid, I.grid, "infinitesimal_action");
  const VectorField grad = image_gradient(I);
  return Image(I.grid, -(grad.values.cwiseProduct(u.values)).rowwise().sum());
}

VectorField diamond(const Image& I, const ImageMomentum& pi) {
  require_same_grid(I.grid, pi.grid, "diamond");
  VectorField out = image_gradient(I);
  out.values = -(out.values.array().colwise() * pi.values.array()).matrix();
  return out;
}

ImageMomentum cotangent_action(const DeformationField& phi, const DeformationField& phi_inv,
                               const ImageMomentum& pi) {
  require_same_grid(phi.grid, pi.grid, "cotangent_action");
  const JacobianDeterminant jac = jacobian_det(phi_inv);
  if (!jac.diffeomorphic())
    throw DiffeomorphismError("cotangent_action: non-positive Jacobian determinant");
  ImageMomentum out = deform_image(pi, phi_inv);
  out.values.array() *= jac.det.values.array();
  return out;
}

ImageMomentum cotangent_action(const DeformationField& phi, const ImageMomentum& pi) {
  return cotangent_action(phi, invert_map(phi), pi);
}

VectorField coadjoint_action(const DeformationField& phi, const VectorField& m) {
  require_same_grid(phi.grid, m.grid, "coadjoint_action");
  const Grid& g = phi.grid;
  const int d = g.dim;
  const Eigen::MatrixXd jac = jacobian_matrices(phi);
  VectorField out(g);
  for (Index i = 0; i < g.size(); ++i) {
    double y[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) y[a] = phi.positions(i, a);
    const Stencil s = make_stencil(g, y);
    Eigen::VectorXd mv = Eigen::VectorXd::Zero(d);
    for (int c = 0; c < s.count; ++c) mv += s.weight[c] * m.values.row(s.node[c]).transpose();
    Eigen::MatrixXd dphi(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) dphi(a, b) = jac(i, a * d + b);
    out.values.row(i) = (dphi.determinant() * dphi.transpose() * mv).transpose();
  }
  return out;
}

double l2_mismatch(const Image& I, const Image& J) {
  require_same_grid(I.grid, J.grid, "l2_mismatch");
  return I.grid.cell_volume() * (I.values - J.values).squaredNorm();
}

double l2_inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "l2_inner");
  return a.grid.cell_volume() * a.values.dot(b.values);
}

double l2_inner(const VectorField& a, const VectorField& b) {
  require_same_grid(a.grid, b.grid, "l2_inner");
  return a.grid.cell_volume() * a.values.cwiseProduct(b.values).sum();
}

Image gaussian_smooth(const Image& I, double sigma) {
  if (sigma <= 0) return I;
  const Spectral sp(I.grid);
  const Eigen::ArrayXd symbol = (-0.5 * sigma * sigma * sp.wavenumber_squared()).exp();
  return Image(I.grid, sp.multiply(I.values, symbol));
}

Image gaussian_blob(const Grid& g, const Eigen::VectorXd& center, double width, double amplitude) {
  return Image::from_function(g, [&](const double* x) {
    double r2 = 0;
    for (int a = 0; a < g.dim; ++a) {
      const double len = g.length(a);
      double dx = x[a] - center[a];
      dx -= len * std::round(dx / len);
      r2 += dx * dx;
    }
    return amplitude * std::exp(-r2 / (2 * width * width));
  });
}

}  // namespace diffeo
