#pragma once

#include <Eigen/Dense>
#include <functional>

namespace photonkit {

struct LmOptions {
  int max_iterations = 200;
  double step_tol = 1e-10;      // relative step size
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e12;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // chi2_red * (J^T J)^-1 at the solution
  double residual_norm = 0.0;  // ||r||
  int iterations = 0;
  bool converged = false;
};

// Fills the (already weighted) residual vector and, when requested, the
// weighted Jacobian dr/dp. Returning false marks the point invalid (outside
// the model's domain); such steps are rejected.
using LmFunction =
    std::function<bool(const Eigen::VectorXd& p, Eigen::VectorXd& residuals,
                       Eigen::MatrixXd* jacobian)>;

LmResult levenberg_marquardt(const LmFunction& fn, Eigen::VectorXd initial,
                             const LmOptions& opts = {});

}  // namespace photonkit
