#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fsmle/geometry.hpp"
#include "fsmle/linalg.hpp"

namespace fsmle {

// Curvature pair bracketing the log-likelihood near the target: the shrunk
// matrix drives the upper quadratic process, the stretched one the lower.
// An invalid bracket (shrunk matrix not PSD) must not be used downstream.
struct Bracket {
  double r = 0.0;
  double delta = 0.0;
  double omega = 0.0;
  Spd upper_curv;  // (1 - delta) D^2 - omega V^2
  Spd lower_curv;  // (1 + delta) D^2 + omega V^2
  bool valid = false;
};

// Explicit widths; non-finite widths yield an invalid bracket with no
// matrices attached.
Bracket make_bracket(const Spd& curvature, const Spd& score_cov, double delta,
                     double omega, double r = 0.0);

// Minimal admissible widths at radius r: delta(r) from the moduli table and
// omega = 3 nu rho(r).
Bracket make_bracket(const LocalGeometry& geometry, double r);

// Normalized scores (upper, lower) of the bracket at the target gradient.
std::pair<VectorXd, VectorXd> bracket_score(const Bracket& bracket,
                                            const VectorXd& grad_at_star);

// The two quadratic processes at theta: common linear term minus half the
// respective bracket norm.
std::pair<double, double> bracket_process_eval(const Bracket& bracket,
                                               const VectorXd& grad_at_star,
                                               const VectorXd& theta,
                                               const VectorXd& theta_star);

// Deterministic bound on the normalized error term: exceeded with
// probability at most e^{-x}.  Q = 2p (2.7p when p = 1); requires g nu >= 3.
double err_bound(double x, int p, double g, double nu);

struct QuadTailValue {
  double z = 0.0;
  double tail_prob = 0.0;  // bound on P(quadratic form > z)
  int branch = 0;          // 1 small x, 2 intermediate, 3 large deviations
};

// Tail quantile of the squared norm of the normalized score.
QuadTailValue quad_tail(double x, const TailParams& tail);

// Gap constants between the bracket and the unperturbed curvature.
std::pair<double, double> tau_alpha(double delta, double omega, double a);

// High-probability bound on the spread (holds up to ~ 4 e^{-x} plus the
// 8.4 e^{-x_c} residual of the tail theorem).
double spread_bound(double omega, double zq, double alpha, double lambda0,
                    double z);

struct SpreadReport {
  double err_upper = 0.0;
  double err_lower = 0.0;
  double half_norm_gap = 0.0;
  double spread = 0.0;
  double tau = 0.0;
  double alpha = 0.0;
};

SpreadReport spread_empirical(double err_upper, double err_lower,
                              const VectorXd& xi_upper,
                              const VectorXd& xi_lower, double tau = 0.0,
                              double alpha = 0.0);

struct ConcentrationStep {
  int k = 0;
  double r = 0.0;
  double b = 0.0;
};

struct ConcentrationResult {
  double r0 = 0.0;
  bool feasible = false;
  std::string reason;      // violated condition when infeasible
  double guarantee = 0.0;  // e^{-x} once feasible
  std::vector<ConcentrationStep> schedule;
};

// Radius at which the estimator stays inside the local set with probability
// at least 1 - e^{-x}, for a uniform quadratic-growth constant b.
ConcentrationResult concentration_radius(
    double x, int p, double nu, double b,
    const std::function<double(double)>& g_of_r);

// Decaying-growth version: dyadic schedule over the lower table, conditions
// strengthened by log(2) per level.  The table range bounds the search; the
// schedule stops at its edge.  Monotonicity of r b(r) is re-checked here.
ConcentrationResult concentration_radius_varying(
    double x, int p, double nu, const GlobalLowerTable& lower,
    const std::function<double(double)>& g_of_r);

// Critical value for the likelihood-root confidence set.
double confidence_critical(double x, const TailParams& tail,
                           double err_upper_bound);

}  // namespace fsmle
