#pragma once

#include <string>
#include <vector>

#include "fsmle/model.hpp"

namespace fsmle {

struct FitOptions {
  VectorXd start;            // empty selects a class-specific default
  double grad_tol = 1e-9;    // converged when ||grad|| <= grad_tol*(1+|L|)
  int max_iter = 200;
  bool record_trace = false;
  // A gradient-stationary point whose curvature has collapsed relative to the
  // start (flat ridge running to infinity, e.g. separated logistic data) is
  // reported as non-convergence rather than a maximum.
  double curvature_collapse_ratio = 1e-10;
};

struct FitResult {
  VectorXd theta;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string status;         // "ok", "max_iter", "degenerate_curvature"
  std::vector<double> trace;  // objective per accepted step when requested
};

// Maximises the quasi-log-likelihood.  GLM and the smooth i.i.d. family use
// damped Newton with backtracking; the i.i.d. family restarts from perturbed
// points if the Hessian is indefinite at the solution; median regression
// delegates to solve_lad.
FitResult fit_qmle(const Model& model, const VectorXd& y,
                   const FitOptions& opts = {});

struct LadOptions {
  double tau_final = 1e-8;   // smoothing floor
  int max_inner = 200;
};

// Minimises sum_i |y_i - psi_i' theta| by iteratively reweighted least
// squares on sqrt(r^2 + tau^2), driving tau to tau_final.
VectorXd solve_lad(const Design& design, const VectorXd& y,
                   const LadOptions& opts = {});

// Sum of absolute residuals, the objective solve_lad minimises.
double lad_objective(const Design& design, const VectorXd& y,
                     const VectorXd& theta);

// L(theta_hat) - L(theta_star) on the same data.
double excess(const Model& model, const VectorXd& y, const VectorXd& theta_hat,
              const VectorXd& theta_star);

}  // namespace fsmle
