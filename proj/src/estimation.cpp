#include "fsmle/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fsmle {

namespace {

VectorXd default_start(const Model& model, const VectorXd& y) {
  switch (model.cls) {
    case ModelClass::Glm: {
      if (model.kind != GlmKind::Exponential) {
        return VectorXd::Zero(model.p);
      }
      // Need psi_i' theta > 0 throughout; aim at w_i = -1/y_i.
      VectorXd target(model.n);
      for (int i = 0; i < model.n; ++i) {
        target[i] = -1.0 / std::min(y[i], -1e-2);
      }
      VectorXd theta = model.design.rows.colPivHouseholderQr().solve(target);
      if (theta_feasible(model, theta)) return theta;
      throw std::runtime_error("fit: no feasible start for exponential kind");
    }
    case ModelClass::Lad:
      return VectorXd::Zero(model.p);
    case ModelClass::Iid: {
      double mean = y.mean();
      double var = (y.array() - mean).square().sum() /
                   std::max(1, static_cast<int>(y.size()) - 1);
      VectorXd s(2);
      s[0] = mean;
      s[1] = 0.5 * std::log(std::max(var, 1e-12));
      return s;
    }
  }
  throw std::logic_error("unknown model class");
}

struct NewtonOutcome {
  VectorXd theta;
  double value = 0.0;
  bool grad_small = false;
  int iterations = 0;
  std::vector<double> trace;
};

NewtonOutcome damped_newton(const Model& model, const VectorXd& y,
                            VectorXd theta, const FitOptions& opts) {
  NewtonOutcome out;
  double value = loglik(model, y, theta);
  if (!std::isfinite(value)) {
    throw std::invalid_argument("fit: start is outside the model domain");
  }
  if (opts.record_trace) out.trace.push_back(value);

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    VectorXd g = loglik_grad(model, y, theta);
    if (g.norm() <= opts.grad_tol * (1.0 + std::fabs(value))) {
      out.grad_small = true;
      break;
    }
    MatrixXd h = loglik_hess(model, y, theta);
    // Ascent direction from the negative Hessian, shifted if it is not
    // positive definite (possible for the i.i.d. family away from the optimum).
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(-h);
    double lmax = es.eigenvalues().maxCoeff();
    double floor = std::max(lmax, 1.0) * 1e-12;
    VectorXd vals = es.eigenvalues().cwiseMax(floor);
    VectorXd d = es.eigenvectors() *
                 (es.eigenvectors().transpose() * g).cwiseQuotient(vals);

    double slope = g.dot(d);
    double step = 1.0;
    bool accepted = false;
    // Resolution floor of the objective: near the optimum the Armijo margin
    // drops below the rounding noise of an n-term sum, and value comparisons
    // would reject genuine Newton steps.  Allowing the floor keeps full steps
    // flowing so the gradient test terminates on quadratic convergence.
    const double value_noise = 1e-13 * (1.0 + std::fabs(value));
    for (int half = 0; half < 60; ++half) {
      VectorXd cand = theta + step * d;
      double cand_value = loglik(model, y, cand);
      if (std::isfinite(cand_value) &&
          cand_value >= value + 0.25 * step * slope - value_noise) {
        theta = cand;
        value = cand_value;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (opts.record_trace) out.trace.push_back(value);
  }
  out.theta = std::move(theta);
  out.value = value;
  out.iterations = it;
  return out;
}

bool curvature_collapsed(const Model& model, const VectorXd& y,
                         const VectorXd& start, const VectorXd& theta,
                         double ratio) {
  double c0 = sym_op_norm(loglik_hess(model, y, start));
  double c1 = sym_op_norm(loglik_hess(model, y, theta));
  return c1 < ratio * c0;
}

FitResult fit_lad(const Model& model, const VectorXd& y) {
  LadOptions lopts;
  FitResult r;
  r.theta = solve_lad(model.design, y, lopts);
  r.loglik = loglik(model, y, r.theta);
  r.converged = true;
  r.status = "ok";
  return r;
}

}  // namespace

FitResult fit_qmle(const Model& model, const VectorXd& y,
                   const FitOptions& opts) {
  if (y.size() != model.n) throw std::invalid_argument("fit: data size mismatch");
  if (model.cls == ModelClass::Lad) return fit_lad(model, y);

  VectorXd start = opts.start.size() ? opts.start : default_start(model, y);
  if (start.size() != model.p) {
    throw std::invalid_argument("fit: start has wrong dimension");
  }
  NewtonOutcome out = damped_newton(model, y, start, opts);

  if (model.cls == ModelClass::Iid && out.grad_small) {
    MatrixXd h = loglik_hess(model, y, out.theta);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().maxCoeff() > 1e-8 * std::max(scale, 1.0)) {
      // Saddle: retry from perturbed starts and keep the best maximum.
      for (int trial = 0; trial < 5; ++trial) {
        Rng rng(0x72657374ULL, static_cast<std::uint64_t>(trial), 7);
        VectorXd jitter(model.p);
        for (int j = 0; j < model.p; ++j) jitter[j] = 0.5 * rng.normal();
        NewtonOutcome alt = damped_newton(model, y, start + jitter, opts);
        if (alt.grad_small && alt.value > out.value) out = std::move(alt);
      }
    }
  }

  FitResult r;
  r.theta = out.theta;
  r.loglik = out.value;
  r.iterations = out.iterations;
  r.trace = std::move(out.trace);
  if (!out.grad_small) {
    r.converged = false;
    r.status = "max_iter";
    return r;
  }
  if (model.cls == ModelClass::Glm &&
      curvature_collapsed(model, y, start, out.theta,
                          opts.curvature_collapse_ratio)) {
    r.converged = false;
    r.status = "degenerate_curvature";
    return r;
  }
  r.converged = true;
  r.status = "ok";
  return r;
}

VectorXd solve_lad(const Design& design, const VectorXd& y,
                   const LadOptions& opts) {
  if (y.size() != design.n()) {
    throw std::invalid_argument("solve_lad: data size mismatch");
  }
  const MatrixXd& psi = design.rows;
  VectorXd theta = psi.colPivHouseholderQr().solve(y);  // least squares start

  VectorXd r = y - psi * theta;
  double scale = r.cwiseAbs().maxCoeff();
  double tau = std::max(scale * 0.1, 10.0 * opts.tau_final);

  for (;;) {
    for (int it = 0; it < opts.max_inner; ++it) {
      r = y - psi * theta;
      VectorXd w =
          (r.array().square() + tau * tau).sqrt().inverse().matrix();
      MatrixXd a = psi.transpose() * w.asDiagonal() * psi;
      VectorXd b = psi.transpose() * (w.asDiagonal() * y);
      VectorXd next = a.ldlt().solve(b);
      double move = (next - theta).norm();
      theta = next;
      if (move <= 1e-13 * (1.0 + theta.norm())) break;
    }
    if (tau <= opts.tau_final) break;
    tau = std::max(tau * 0.1, opts.tau_final);
  }

  // Finish on a vertex: some minimizer interpolates p observations, and the
  // smoothed iteration converges only linearly once tau is small.  Try the
  // p-subsets among the best-fitting rows and keep a strict improvement, so
  // a flat optimum reached by the iteration (interior of a tie) stays put.
  const int n = design.n();
  const int p = design.p();
  const int m = std::min(n, p + 4);
  r = y - psi * theta;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + m, order.end(),
                    [&r](int a, int b) {
                      return std::fabs(r[a]) < std::fabs(r[b]);
                    });
  double obj = r.cwiseAbs().sum();
  std::vector<int> pick(p);
  std::iota(pick.begin(), pick.end(), 0);
  MatrixXd sub(p, p);
  VectorXd rhs(p);
  for (;;) {
    for (int j = 0; j < p; ++j) {
      sub.row(j) = psi.row(order[pick[j]]);
      rhs[j] = y[order[pick[j]]];
    }
    Eigen::FullPivLU<MatrixXd> lu(sub);
    if (lu.isInvertible()) {
      VectorXd cand = lu.solve(rhs);
      double cand_obj = (y - psi * cand).cwiseAbs().sum();
      if (cand_obj < obj - 1e-12 * (1.0 + obj)) {
        theta = cand;
        obj = cand_obj;
      }
    }
    int j = p - 1;
    while (j >= 0 && pick[j] == m - p + j) --j;
    if (j < 0) break;
    ++pick[j];
    for (int k = j + 1; k < p; ++k) pick[k] = pick[k - 1] + 1;
  }
  return theta;
}

double lad_objective(const Design& design, const VectorXd& y,
                     const VectorXd& theta) {
  return (y - design.rows * theta).cwiseAbs().sum();
}

double excess(const Model& model, const VectorXd& y, const VectorXd& theta_hat,
              const VectorXd& theta_star) {
  return loglik(model, y, theta_hat) - loglik(model, y, theta_star);
}

}  // namespace fsmle
