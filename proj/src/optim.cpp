#include "diffeo/optim.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "diffeo/grid.hpp"

namespace diffeo {

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double eps) {
  const Index n = x.size();
  Eigen::VectorXd g(n);
  auto work = [&](Index begin, Index end) {
    for (Index j = begin; j < end; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += eps;
      xm[j] -= eps;
      g[j] = (f(xp) - f(xm)) / (2 * eps);
    }
  };
  const int workers = int(std::min<Index>(thread_count(), n));
  if (workers <= 1) {
    work(0, n);
    return g;
  }
  std::vector<std::thread> pool;
  const Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Index b = w * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  for (auto& t : pool) t.join();
  return g;
}

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const std::runtime_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

BfgsResult bfgs_minimize(const Objective& f, const GradientFn& grad, Eigen::VectorXd x0,
                         const BfgsOptions& opt) {
  BfgsResult res;
  res.x = std::move(x0);
  res.value = f(res.x);
  res.trace.push_back(res.value);
  const Index n = res.x.size();
  if (n == 0) {
    res.converged = true;
    res.message = "empty parameter vector";
    return res;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Eigen::VectorXd g = grad(res.x);
  for (int it = 0; it < opt.max_iters; ++it) {
    res.gradient_norm = g.norm();
    if (res.gradient_norm <= opt.tol_grad) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -H * g;
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      // curvature information went stale; restart from steepest descent
      H.setIdentity();
      scaled = false;
      dir = -g;
      slope = -g.squaredNorm();
    }
    double t = scaled ? 1.0 : opt.initial_step / res.gradient_norm;
    const double t_min = opt.min_step * t;
    double trial = std::numeric_limits<double>::infinity();
    Eigen::VectorXd xn;
    while (t >= t_min) {
      xn = res.x + t * dir;
      trial = safe_eval(f, xn);
      if (trial <= res.value + opt.armijo_c * t * slope) break;
      t *= 0.5;
    }
    if (!(t >= t_min)) {
      res.line_search_failed = true;
      res.message = "line search failed";
      break;
    }
    const Eigen::VectorXd gn = grad(xn);
    const Eigen::VectorXd s = xn - res.x;
    const Eigen::VectorXd y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n) - rho * y * s.transpose();
      H = V.transpose() * H * V + rho * s * s.transpose();
    }
    res.x = xn;
    res.value = trial;
    g = gn;
    res.iterations = it + 1;
    res.trace.push_back(res.value);
  }
  res.gradient_norm = g.norm();
  if (res.gradient_norm <= opt.tol_grad) res.converged = true;
  if (res.message.empty()) res.message = res.converged ? "converged" : "iteration limit reached";
  return res;
}

}  // namespace diffeo
