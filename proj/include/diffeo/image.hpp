// Grey-value images, their momenta (scalar densities) and the group actions
// on both.
#pragma once

#include <Eigen/Core>

#include "diffeo/flows.hpp"
#include "diffeo/grid.hpp"

namespace diffeo {

using Image = ScalarField;
using ImageMomentum = ScalarField;

/// Node-wise I(phi_inv(x)) by multilinear interpolation.
Image deform_image(const Image& I, const DeformationField& phi_inv);

/// Periodic central differences.
VectorField image_gradient(const Image& I);

/// -grad(I) . u
Image infinitesimal_action(const VectorField& u, const Image& I);

/// I <> pi = -pi grad(I)
VectorField diamond(const Image& I, const ImageMomentum& pi);

/// Density action |det D phi_inv(x)| pi(phi_inv(x)). phi_inv is computed by
/// invert_map when not supplied. Throws DiffeomorphismError on a
/// non-positive Jacobian.
ImageMomentum cotangent_action(const DeformationField& phi, const ImageMomentum& pi);
ImageMomentum cotangent_action(const DeformationField& phi, const DeformationField& phi_inv,
                               const ImageMomentum& pi);

/// Ad*_phi m = (det D phi) D phi^T (m o phi).
VectorField coadjoint_action(const DeformationField& phi, const VectorField& m);

/// h^d sum (I - J)^2
double l2_mismatch(const Image& I, const Image& J);
double l2_inner(const ScalarField& a, const ScalarField& b);
double l2_inner(const VectorField& a, const VectorField& b);

/// Convolution with a unit-mass Gaussian of width sigma (physical units).
Image gaussian_smooth(const Image& I, double sigma);

/// amplitude * exp(-|x - c|^2 / (2 width^2)), using the periodic distance to c.
Image gaussian_blob(const Grid& g, const Eigen::VectorXd& center, double width,
                    double amplitude = 1.0);

}  // namespace diffeo
