// Small optimisation helpers shared by the shooting and landmark solvers.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace diffeo {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Central differences, one coordinate per task. Entries are independent, so
/// the result does not depend on the worker count.
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double eps);

struct BfgsOptions {
  int max_iters = 100;
  double tol_grad = 1e-8;
  double armijo_c = 1e-4;
  /// Length of the first trial step, along -g / |g|.
  double initial_step = 1.0;
  double min_step = 1e-12;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0;
  double gradient_norm = 0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  /// Objective after every accepted iterate, starting with f(x0).
  std::vector<double> trace;
  std::string message;
};

/// Quasi-Newton descent with Armijo backtracking. Objective values that are
/// non-finite or thrown std::runtime_error count as rejected trial points.
BfgsResult bfgs_minimize(const Objective& f, const GradientFn& grad, Eigen::VectorXd x0,
                         const BfgsOptions& opt);

}  // namespace diffeo
