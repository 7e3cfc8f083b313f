// SO(3) acting on R^3: a finite-dimensional model of the group-action
// calculus used by the registration solvers (Ad, Ad*, ad, ad*, momentum
// map, flows and their variations).
//
// Conventions: the Lie algebra so(3) is identified with R^3 through the hat
// map, hat(e_x) e_y = e_z, so ad becomes the cross product. The dual so(3)*
// is identified with R^3 through the Euclidean pairing.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace diffeo::geometry {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
Mat3<Scalar> hat(const Vec3<Scalar>& w) {
  Mat3<Scalar> m;
  m << Scalar(0), -w.z(), w.y(),
       w.z(), Scalar(0), -w.x(),
       -w.y(), w.x(), Scalar(0);
  return m;
}

/// Inverse of hat; only the skew part of `m` is read.
template <typename Scalar>
Vec3<Scalar> vee(const Mat3<Scalar>& m) {
  return Vec3<Scalar>(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) / Scalar(2);
}

/// Element of SO(3). Construction from a raw matrix checks orthogonality and
/// orientation to within `tol`.
template <typename Scalar>
class Rotation {
 public:
  Rotation() : m_(Mat3<Scalar>::Identity()) {}

  explicit Rotation(const Mat3<Scalar>& m, Scalar tol = Scalar(1e-12)) : m_(m) {
    if ((m * m.transpose() - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff() > tol ||
        std::abs(m.determinant() - Scalar(1)) > tol) {
      throw std::invalid_argument("Rotation: matrix is not in SO(3)");
    }
  }

  static Rotation identity() { return Rotation(); }

  /// exp(hat(w)) by the Rodrigues formula.
  static Rotation exp(const Vec3<Scalar>& w) {
    const Scalar theta = w.norm();
    const Mat3<Scalar> W = hat(w);
    Mat3<Scalar> r = Mat3<Scalar>::Identity();
    if (theta < Scalar(1e-8)) {
      r += W + W * W / Scalar(2);
    } else {
      r += std::sin(theta) / theta * W + (Scalar(1) - std::cos(theta)) / (theta * theta) * W * W;
    }
    return project(r);
  }

  static Rotation about_x(Scalar a) { return exp(Vec3<Scalar>(a, 0, 0)); }
  static Rotation about_y(Scalar a) { return exp(Vec3<Scalar>(0, a, 0)); }
  static Rotation about_z(Scalar a) { return exp(Vec3<Scalar>(0, 0, a)); }

  /// Nearest rotation in the Frobenius norm (polar factor).
  static Rotation project(const Mat3<Scalar>& m) {
    Eigen::JacobiSVD<Mat3<Scalar>> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3<Scalar> u = svd.matrixU();
    const Mat3<Scalar> v = svd.matrixV();
    if ((u * v.transpose()).determinant() < Scalar(0)) u.col(2) *= Scalar(-1);
    Rotation r;
    r.m_ = u * v.transpose();
    return r;
  }

  const Mat3<Scalar>& matrix() const { return m_; }
  Rotation inverse() const {
    Rotation r;
    r.m_ = m_.transpose();
    return r;
  }
  Rotation operator*(const Rotation& other) const {
    Rotation r;
    r.m_ = m_ * other.m_;
    return r;
  }
  Vec3<Scalar> operator*(const Vec3<Scalar>& x) const { return m_ * x; }

 private:
  Mat3<Scalar> m_;
};

/// g h g^-1
template <typename Scalar>
Rotation<Scalar> conj(const Rotation<Scalar>& g, const Rotation<Scalar>& h) {
  return g * h * g.inverse();
}

/// Ad_g u, the derivative of conj_g at the identity. For SO(3) this is g u.
template <typename Scalar>
Vec3<Scalar> adjoint(const Rotation<Scalar>& g, const Vec3<Scalar>& u) {
  return g.matrix() * u;
}

/// Ad*_g mu, defined by <Ad*_g mu, u> = <mu, Ad_g u>.
template <typename Scalar>
Vec3<Scalar> coadjoint(const Rotation<Scalar>& g, const Vec3<Scalar>& mu) {
  return g.matrix().transpose() * mu;
}

/// ad_u v = u x v.
template <typename Scalar>
Vec3<Scalar> ad(const Vec3<Scalar>& u, const Vec3<Scalar>& v) {
  return u.cross(v);
}

/// ad*_u mu = mu x u, the transpose of ad_u.
template <typename Scalar>
Vec3<Scalar> ad_star(const Vec3<Scalar>& u, const Vec3<Scalar>& mu) {
  return mu.cross(u);
}

/// Fundamental vector field of the rotation action on R^3: zeta_u(x) = u x x.
template <typename Scalar>
Vec3<Scalar> fundamental_field(const Vec3<Scalar>& u, const Vec3<Scalar>& x) {
  return u.cross(x);
}

/// Momentum map of the cotangent-lifted action on T*R^3: x <> p = x x p.
template <typename Scalar>
Vec3<Scalar> momentum_map_r3(const Vec3<Scalar>& x, const Vec3<Scalar>& p) {
  return x.cross(p);
}

/// Cotangent-lifted action on a covector at x: (g^-1)^T p, which is g p here.
template <typename Scalar>
Vec3<Scalar> cotangent_lift(const Rotation<Scalar>& g, const Vec3<Scalar>& p) {
  return g.matrix() * p;
}

/// Curve t -> u_t in so(3), sampled on a uniform grid of [0, 1].
template <typename Scalar>
class AlgebraPath {
 public:
  AlgebraPath() = default;

  explicit AlgebraPath(std::vector<Vec3<Scalar>> samples) : samples_(std::move(samples)) {
    if (samples_.size() < 2) throw std::invalid_argument("AlgebraPath: need at least two samples");
  }

  static AlgebraPath constant(const Vec3<Scalar>& u, int intervals = 1) {
    return AlgebraPath(std::vector<Vec3<Scalar>>(intervals + 1, u));
  }

  template <typename Fn>
  static AlgebraPath sample(Fn&& f, int intervals) {
    std::vector<Vec3<Scalar>> s;
    s.reserve(intervals + 1);
    for (int k = 0; k <= intervals; ++k) s.push_back(f(Scalar(k) / Scalar(intervals)));
    return AlgebraPath(std::move(s));
  }

  int intervals() const { return static_cast<int>(samples_.size()) - 1; }
  bool empty() const { return samples_.empty(); }
  Scalar time(int k) const { return Scalar(k) / Scalar(intervals()); }
  const Vec3<Scalar>& operator[](int k) const { return samples_[k]; }
  const std::vector<Vec3<Scalar>>& samples() const { return samples_; }

  /// Piecewise-linear evaluation.
  Vec3<Scalar> at(Scalar t) const {
    const int n = intervals();
    Scalar s = std::clamp(t, Scalar(0), Scalar(1)) * Scalar(n);
    int k = std::min(static_cast<int>(std::floor(s)), n - 1);
    const Scalar w = s - Scalar(k);
    return (Scalar(1) - w) * samples_[k] + w * samples_[k + 1];
  }

  bool same_grid(const AlgebraPath& other) const { return intervals() == other.intervals(); }

  AlgebraPath axpy(Scalar a, const AlgebraPath& other) const {
    std::vector<Vec3<Scalar>> s(samples_);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += a * other.samples_[k];
    return AlgebraPath(std::move(s));
  }

 private:
  std::vector<Vec3<Scalar>> samples_;
};

namespace detail {

template <typename Scalar>
void check_path(const AlgebraPath<Scalar>& u) {
  if (u.empty()) throw std::invalid_argument("empty algebra path");
}

/// One RK4 step of dg/dt = hat(u_t) g, followed by re-orthonormalisation.
template <typename Scalar>
Rotation<Scalar> rk4_group_step(const AlgebraPath<Scalar>& u, const Rotation<Scalar>& g, Scalar t,
                                Scalar dt) {
  const Mat3<Scalar>& G = g.matrix();
  const Mat3<Scalar> U0 = hat(u.at(t));
  const Mat3<Scalar> Um = hat(u.at(t + dt / 2));
  const Mat3<Scalar> U1 = hat(u.at(t + dt));
  const Mat3<Scalar> k1 = U0 * G;
  const Mat3<Scalar> k2 = Um * (G + dt / 2 * k1);
  const Mat3<Scalar> k3 = Um * (G + dt / 2 * k2);
  const Mat3<Scalar> k4 = U1 * (G + dt * k3);
  return Rotation<Scalar>::project(G + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4));
}

}  // namespace detail

/// Solves dg/dt = u_t g, g_0 = e and returns the samples g_{k/steps}.
template <typename Scalar>
std::vector<Rotation<Scalar>> group_flow_trajectory(const AlgebraPath<Scalar>& u, int steps) {
  detail::check_path(u);
  if (steps < 1) throw std::invalid_argument("integrate_group_flow: steps must be >= 1");
  std::vector<Rotation<Scalar>> out;
  out.reserve(steps + 1);
  out.emplace_back();
  const Scalar dt = Scalar(1) / Scalar(steps);
  for (int k = 0; k < steps; ++k) out.push_back(detail::rk4_group_step(u, out.back(), k * dt, dt));
  return out;
}

template <typename Scalar>
Rotation<Scalar> integrate_group_flow(const AlgebraPath<Scalar>& u, int steps) {
  return group_flow_trajectory(u, steps).back();
}

/// Right-trivialised variation delta g_1 g_1^-1 of the flow endpoint, from
/// delta g_1 = g_1 int_0^1 Ad_{g_s^-1} delta u_s ds. The integral is carried
/// along the group ODE with the same RK4 stages.
template <typename Scalar>
Vec3<Scalar> flow_variation(const AlgebraPath<Scalar>& u, const AlgebraPath<Scalar>& delta_u,
                            int steps) {
  detail::check_path(u);
  detail::check_path(delta_u);
  if (!u.same_grid(delta_u)) throw std::invalid_argument("flow_variation: mismatched time grids");
  if (steps < 1) throw std::invalid_argument("flow_variation: steps must be >= 1");

  const Scalar dt = Scalar(1) / Scalar(steps);
  Rotation<Scalar> g;
  Vec3<Scalar> xi = Vec3<Scalar>::Zero();
  auto integrand = [&](const Mat3<Scalar>& G, Scalar t) -> Vec3<Scalar> {
    return G.transpose() * delta_u.at(t);  // Ad_{g^-1} = g^T
  };
  for (int k = 0; k < steps; ++k) {
    const Scalar t = k * dt;
    const Mat3<Scalar>& G = g.matrix();
    const Mat3<Scalar> U0 = hat(u.at(t));
    const Mat3<Scalar> Um = hat(u.at(t + dt / 2));
    const Mat3<Scalar> U1 = hat(u.at(t + dt));
    const Mat3<Scalar> k1 = U0 * G;
    const Mat3<Scalar> G2 = G + dt / 2 * k1;
    const Mat3<Scalar> k2 = Um * G2;
    const Mat3<Scalar> G3 = G + dt / 2 * k2;
    const Mat3<Scalar> k3 = Um * G3;
    const Mat3<Scalar> G4 = G + dt * k3;
    const Mat3<Scalar> k4 = U1 * G4;
    xi += dt / 6 *
          (integrand(G, t) + 2 * integrand(G2, t + dt / 2) + 2 * integrand(G3, t + dt / 2) +
           integrand(G4, t + dt));
    g = Rotation<Scalar>::project(G + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4));
  }
  return adjoint(g, xi);
}

/// Euler-Poincare equation d/dt m = -ad*_u m with m = inertia * u. The
/// identity inertia gives the bi-invariant case.
template <typename Scalar>
std::vector<Vec3<Scalar>> euler_poincare(const Vec3<Scalar>& u0, const Mat3<Scalar>& inertia,
                                         Scalar t_end, int steps) {
  if (steps < 1) throw std::invalid_argument("euler_poincare: steps must be >= 1");
  const Eigen::LLT<Mat3<Scalar>> llt(inertia);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("euler_poincare: inertia not SPD");
  auto rhs = [&](const Vec3<Scalar>& m) -> Vec3<Scalar> {
    const Vec3<Scalar> u = llt.solve(m);
    return -ad_star(u, m);
  };
  const Scalar dt = t_end / Scalar(steps);
  Vec3<Scalar> m = inertia * u0;
  std::vector<Vec3<Scalar>> us{u0};
  us.reserve(steps + 1);
  for (int k = 0; k < steps; ++k) {
    const Vec3<Scalar> k1 = rhs(m);
    const Vec3<Scalar> k2 = rhs(m + dt / 2 * k1);
    const Vec3<Scalar> k3 = rhs(m + dt / 2 * k2);
    const Vec3<Scalar> k4 = rhs(m + dt * k3);
    m += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    us.push_back(llt.solve(m));
  }
  return us;
}

/// Maximum residuals of the group identities, evaluated over `draws` random
/// samples. Used by the check-geometry command and the test suites.
struct IdentityResiduals {
  double ad_composition = 0;      // Ad_g Ad_h - Ad_gh
  double ad_inverse = 0;          // Ad_{g^-1} Ad_g - Id
  double coad_composition = 0;    // Ad*_g Ad*_h - Ad*_hg
  double coad_pairing = 0;        // <Ad*_g mu, u> - <mu, Ad_g u>
  double ad_star_pairing = 0;     // <ad*_u mu, v> - <mu, ad_u v>
  double ad_antisymmetry = 0;     // ad_u v + ad_v u
  double norm_mechanism = 0;      // <ad*_u u, u>
  double equivariance_field = 0;  // g.zeta_u(g^-1 x) - zeta_{Ad_g u}(x)
  double equivariance_momentum = 0;  // (g x) <> (g.p) - Ad*_{g^-1}(x <> p)
  double momentum_pairing = 0;    // <x <> p, u> - <p, zeta_u(x)>
  double conj_homomorphism = 0;   // conj_g conj_h - conj_gh
};

template <typename Rng>
Rotation<double> random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  return Rotation<double>::project(quat.toRotationMatrix());
}

template <typename Rng>
Vec3<double> random_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3<double>(n(rng), n(rng), n(rng));
}

inline IdentityResiduals identity_residuals(int draws, unsigned seed) {
  std::mt19937_64 rng(seed);
  IdentityResiduals r;
  auto upd = [](double& slot, double v) { slot = std::max(slot, v); };
  const Mat3<double> I = Mat3<double>::Identity();
  for (int k = 0; k < draws; ++k) {
    const auto g = random_rotation(rng);
    const auto h = random_rotation(rng);
    const auto k3 = random_rotation(rng);
    const Vec3<double> u = random_vector(rng), v = random_vector(rng);
    const Vec3<double> mu = random_vector(rng), x = random_vector(rng), p = random_vector(rng);

    upd(r.conj_homomorphism,
        (conj(g, conj(h, k3)).matrix() - conj(g * h, k3).matrix()).cwiseAbs().maxCoeff());
    upd(r.ad_composition, (adjoint(g, adjoint(h, u)) - adjoint(g * h, u)).cwiseAbs().maxCoeff());
    upd(r.ad_inverse, (adjoint(g.inverse(), adjoint(g, u)) - u).cwiseAbs().maxCoeff());
    upd(r.coad_composition,
        (coadjoint(g, coadjoint(h, mu)) - coadjoint(h * g, mu)).cwiseAbs().maxCoeff());
    for (int b = 0; b < 3; ++b) {
      const Vec3<double> e = I.col(b);
      upd(r.coad_pairing, std::abs(coadjoint(g, mu).dot(e) - mu.dot(adjoint(g, e))));
      upd(r.ad_star_pairing, std::abs(ad_star(u, mu).dot(e) - mu.dot(ad(u, e))));
      upd(r.momentum_pairing,
          std::abs(momentum_map_r3(x, p).dot(e) - p.dot(fundamental_field(e, x))));
    }
    upd(r.ad_antisymmetry, (ad(u, v) + ad(v, u)).cwiseAbs().maxCoeff());
    upd(r.norm_mechanism, std::abs(ad_star(u, u).dot(u)));
    upd(r.equivariance_field,
        (g * fundamental_field(u, g.inverse() * x) - fundamental_field(adjoint(g, u), x))
            .cwiseAbs()
            .maxCoeff());
    upd(r.equivariance_momentum,
        (momentum_map_r3(Vec3<double>(g * x), cotangent_lift(g, p)) -
         coadjoint(g.inverse(), momentum_map_r3(x, p)))
            .cwiseAbs()
            .maxCoeff());
  }
  return r;
}

}  // namespace diffeo::geometry
