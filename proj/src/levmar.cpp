#include "photonkit/fit/levmar.hpp"

#include <cmath>
#include <limits>

#include "photonkit/errors.hpp"

namespace photonkit {

namespace {

// scale-free stationarity: cosine between the residual and every Jacobian
// column; at a (local) least-squares solution the residual is orthogonal to
// the model tangent space
bool stationary(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& jtr,
                double residual_norm, double tol = 1e-7) {
  if (residual_norm == 0.0) return true;
  double max_col = 0.0;
  for (Eigen::Index c = 0; c < jtr.size(); ++c)
    max_col = std::max(max_col, jacobian.col(c).norm());
  for (Eigen::Index c = 0; c < jtr.size(); ++c) {
    const double col_norm = jacobian.col(c).norm();
    // a column vanishing relative to the others is an insensitive direction
    // (e.g. a squared-parameter pinned at zero), not a descent direction
    if (col_norm <= 1e-9 * max_col) continue;
    if (std::abs(jtr[c]) > tol * col_norm * residual_norm) return false;
  }
  return true;
}

}  // namespace

LmResult levenberg_marquardt(const LmFunction& fn, Eigen::VectorXd initial,
                             const LmOptions& opts) {
  const Eigen::Index n_params = initial.size();
  LmResult result;
  result.params = std::move(initial);

  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  if (!fn(result.params, residuals, &jacobian))
    throw ValidationError("levenberg_marquardt: initial point outside model domain");
  double cost = residuals.squaredNorm();

  double lambda = opts.lambda_init;
  Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
  Eigen::VectorXd jtr = jacobian.transpose() * residuals;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    result.iterations = iter + 1;

    if (stationary(jacobian, jtr, std::sqrt(cost))) {
      result.converged = true;
      break;
    }

    // (J^T J + lambda diag(J^T J)) step = -J^T r, solved in Marquardt-scaled
    // variables (unit diagonal) so wildly different parameter scales and
    // near-dead columns stay numerically tame
    const Eigen::VectorXd diag = jtj.diagonal();
    const double d_floor = std::max(1e-14 * diag.maxCoeff(), 1e-300);
    Eigen::VectorXd scale(n_params);
    for (Eigen::Index i = 0; i < n_params; ++i)
      scale[i] = std::sqrt(std::max(diag[i], d_floor));
    Eigen::MatrixXd lhs = jtj;
    for (Eigen::Index r = 0; r < n_params; ++r)
      for (Eigen::Index c = 0; c < n_params; ++c)
        lhs(r, c) /= scale[r] * scale[c];
    for (Eigen::Index i = 0; i < n_params; ++i) lhs(i, i) += lambda;
    const Eigen::VectorXd rhs = -(jtr.array() / scale.array()).matrix();
    Eigen::VectorXd step = lhs.ldlt().solve(rhs);
    step = (step.array() / scale.array()).matrix();
    if (!step.allFinite()) {
      lambda *= opts.lambda_up;
      if (lambda > opts.lambda_max) break;
      continue;
    }

    const Eigen::VectorXd candidate = result.params + step;
    Eigen::VectorXd trial_residuals;
    const bool valid = fn(candidate, trial_residuals, nullptr);
    const double trial_cost = valid ? trial_residuals.squaredNorm()
                                    : std::numeric_limits<double>::infinity();

    if (valid && trial_cost < cost) {
      const double rel_step =
          step.norm() / std::max(result.params.norm(), 1e-300);
      const double rel_reduction = (cost - trial_cost) / std::max(cost, 1e-300);
      result.params = candidate;
      cost = trial_cost;
      lambda = std::max(lambda * opts.lambda_down, 1e-12);
      if (!fn(result.params, residuals, &jacobian)) break;
      jtj = jacobian.transpose() * jacobian;
      jtr = jacobian.transpose() * residuals;
      if (rel_step < opts.step_tol || rel_reduction < 1e-14) {
        result.converged = true;
        break;
      }
    } else if (valid && trial_cost == cost) {
      // an improvement too small to represent against the cost scale
      result.converged = true;
      break;
    } else {
      lambda *= opts.lambda_up;
      // the damped step shrinks as lambda grows; once the proposal is below
      // the step tolerance there is nothing left to resolve
      if (step.norm() <=
          opts.step_tol * std::max(result.params.norm(), 1e-300)) {
        result.converged = true;
        break;
      }
      if (lambda > opts.lambda_max) {
        result.converged = stationary(jacobian, jtr, std::sqrt(cost), 1e-5);
        break;
      }
    }
  }

  result.residual_norm = std::sqrt(cost);

  const Eigen::Index n_res = residuals.size();
  const double dof = static_cast<double>(n_res > n_params ? n_res - n_params : 1);
  const double chi2_red = cost / dof;
  Eigen::MatrixXd jtj_inv = jtj.completeOrthogonalDecomposition().pseudoInverse();
  result.covariance = chi2_red * jtj_inv;
  return result;
}

}  // namespace photonkit
