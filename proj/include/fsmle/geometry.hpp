#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fsmle/linalg.hpp"
#include "fsmle/model.hpp"

namespace fsmle {

// Deterministic low-discrepancy unit directions (one per row).  A rank-1
// lattice in the unit cube is pushed through the normal quantile and
// normalized, which equidistributes on the sphere for any dimension.
MatrixXd sphere_directions(int p, int count);

struct TargetResult {
  VectorXd theta_star;
  double grad_norm = 0.0;      // achieved norm of the mean-score at theta_star
  double mc_std_error = 0.0;   // 0: analytic route
  int iterations = 0;
};

// Maximizer of E L(theta).  In-family truths short-circuit to theta_true;
// otherwise a damped Newton iteration on the exact mean log-likelihood.
TargetResult compute_target(const Model& model);

struct FisherResult {
  Spd curvature;         // D^2: negative Hessian of E L at theta_star
  Spd score_cov;         // V^2: covariance (or covariance bound) of grad L
  double score_cov_se = 0.0;  // Monte Carlo SE scale when V^2 is estimated
};

// Analytic where available: GLM uses the cumulant curvature and the
// per-observation scales, median regression the residual densities at zero
// and the quarter Gram matrix, the i.i.d. family exact or Monte Carlo
// per-observation moments.  Throws std::domain_error when D^2 is singular.
FisherResult fisher_matrices(const Model& model, const VectorXd& theta_star);

// xi = D^{-1} grad L(theta_star) via the symmetric inverse square root.
VectorXd normalized_score(const VectorXd& grad_at_star, const Spd& curvature);

// Smallest a with a^2 D^2 >= V^2.
double identifiability_constant(const Spd& curvature, const Spd& score_cov);

// Spectral summary of B = D^{-1} V^2 D^{-1} plus the derived tail constants.
struct TailParams {
  Spd B;
  double dim_a = 0.0;    // tr B, the effective dimension
  double va2 = 0.0;      // 2 tr B^2
  double lambda0 = 0.0;  // largest eigenvalue of B
  double mu_c = 2.0 / 3.0;
  double yc = 0.0;
  double gc = 0.0;
  double xc = 0.0;
  double nu = 1.0;
  double g = 0.0;
};

// Requires g^2 >= 2 tr B; throws std::domain_error otherwise.
TailParams spectral_stats(const Spd& curvature, const Spd& score_cov,
                          double nu, double g);

// Tabulated local moduli delta(r), rho(r): nondecreasing, zero at zero.
struct ModuliTable {
  std::vector<double> r;
  std::vector<double> delta;
  std::vector<double> rho;
  bool conditions_violated = false;  // delta or rho exceeds 1/2 on the grid
  double violation_r = std::numeric_limits<double>::infinity();

  double delta_at(double radius) const;
  double rho_at(double radius) const;
};

struct ModuliOptions {
  std::vector<double> r_grid;  // empty: geometric default scaled by sqrt(p)
  int directions = 64;
  // i.i.d. calibration: probe radii on the per-observation scale and the
  // Monte Carlo budget for the gradient-increment spread.
  std::vector<double> unit_radii = {0.1, 0.2, 0.4};
  int mc_samples = 40000;
  std::uint64_t seed = 0x67656f6dULL;
};

ModuliTable local_moduli(const Model& model, const VectorXd& theta_star,
                         const Spd& curvature, const Spd& score_cov,
                         const ModuliOptions& options = {});

// Worst hybrid local-modulus value over an explicit probe set: the largest of
// the curvature-ratio norm and the quadratic-approximation ratio deviation.
// Used by the verification engine so that its sup grid and the bracket share
// probe points.
double delta_on_points(const Model& model, const VectorXd& theta_star,
                       const Spd& curvature,
                       const std::vector<VectorXd>& points);

// Lower quadratic-growth table b(r) for the large-deviation zone:
// -E L(theta, theta_star) >= b(r) ||V(theta - theta_star)||^2 / 2 on probes.
struct GlobalLowerTable {
  std::vector<double> r;
  std::vector<double> b;
  bool r_b_monotone = true;  // r * b(r) nondecreasing on the table

  double b_at(double radius) const;
  double r_max() const { return r.empty() ? 0.0 : r.back(); }
};

GlobalLowerTable global_identifiability(const Model& model,
                                        const VectorXd& theta_star,
                                        const Spd& score_cov,
                                        double r_max = 0.0,
                                        int directions = 64);

// N^{-1/2} = max_i S_i ||V^{-1} Psi_i||; the closed form of the per-row
// sup over directions.
double glm_effective_n(const Design& design, const VectorXd& s,
                       const Spd& score_cov);

// Monte Carlo probe of the exponential-moment conditions.  Estimates
// log E exp{lambda gamma' grad zeta(theta) / ||V gamma||} on the lambda grid
// and reports the worst ratio to lambda^2/2 (an empirical nu^2).
struct ExpMomentProbe {
  double worst_ratio = 0.0;
  std::vector<double> lambdas;  // grid points kept
  int dropped = 0;              // grid points lost to overflow
};

ExpMomentProbe probe_exp_moment(const Model& model, const Spd& score_cov,
                                const VectorXd& theta, const VectorXd& gamma,
                                const std::vector<double>& lambda_grid,
                                int sample_count, std::uint64_t seed);

// Increment variant: grad zeta(theta) - grad zeta(theta_star), scaled by
// rho_scale ||V gamma||.  A identically-zero increment reports ratio 0.
ExpMomentProbe probe_exp_moment_increment(
    const Model& model, const Spd& score_cov, const VectorXd& theta,
    const VectorXd& theta_star, const VectorXd& gamma, double rho_scale,
    const std::vector<double>& lambda_grid, int sample_count,
    std::uint64_t seed);

// Exponential-moment range: g = g1 sqrt(N) with N the effective sample size.
// Bounded-score families use g1 = 1/2 (the gaussian kind its exact 1);
// unbounded-score families calibrate g1 by probing so the empirical nu^2
// stays under a documented cap.
struct ScoreRange {
  double g1 = 0.5;
  double g = 0.0;
  double effective_n = 0.0;
  bool probed = false;
  double nu2_probe = 0.0;  // worst empirical nu^2 seen during calibration
};

ScoreRange score_range(const Model& model, const VectorXd& theta_star,
                       const Spd& score_cov,
                       std::uint64_t seed = 0x67656f6dULL);

// Everything the bounds and verification layers need, computed once.
struct LocalGeometry {
  VectorXd theta_star;
  Spd curvature;   // D^2
  Spd score_cov;   // V^2
  double score_cov_se = 0.0;
  double a = 0.0;  // identifiability constant
  double nu = 1.0;
  double g = 0.0;
  double effective_n = 0.0;
  ModuliTable moduli;
  GlobalLowerTable lower;
  TargetResult target_info;
  ScoreRange range;
};

struct GeometryOptions {
  ModuliOptions moduli;
  double lower_r_max = 0.0;  // 0: default multiple of sqrt(p)
};

LocalGeometry analyze_geometry(const Model& model,
                               const GeometryOptions& options = {});

}  // namespace fsmle
