#include "fsmle/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsmle {

namespace {

double entropy_q(int p) {
  if (p < 0) throw std::invalid_argument("entropy_q: negative dimension");
  return (p >= 2 ? 2.0 : 2.7) * static_cast<double>(p);
}

}  // namespace

Bracket make_bracket(const Spd& curvature, const Spd& score_cov, double delta,
                     double omega, double r) {
  if (delta < 0.0 || omega < 0.0)
    throw std::invalid_argument("make_bracket: widths must be nonnegative");
  Bracket bracket;
  bracket.r = r;
  bracket.delta = delta;
  bracket.omega = omega;
  if (!std::isfinite(delta) || !std::isfinite(omega)) return bracket;
  const MatrixXd d2 = curvature.mat();
  const MatrixXd v2 = score_cov.mat();
  Spd shrunk((1.0 - delta) * d2 - omega * v2);
  bracket.upper_curv = shrunk;
  bracket.lower_curv = Spd((1.0 + delta) * d2 + omega * v2);
  bracket.valid = shrunk.is_psd();
  return bracket;
}

Bracket make_bracket(const LocalGeometry& geometry, double r) {
  if (!(r > 0.0))
    throw std::invalid_argument("make_bracket: radius must be positive");
  const double delta = geometry.moduli.delta_at(r);
  const double omega = 3.0 * geometry.nu * geometry.moduli.rho_at(r);
  return make_bracket(geometry.curvature, geometry.score_cov, delta, omega, r);
}

std::pair<VectorXd, VectorXd> bracket_score(const Bracket& bracket,
                                            const VectorXd& grad_at_star) {
  if (!bracket.valid)
    throw std::domain_error("bracket_score: invalid bracket");
  return {bracket.upper_curv.apply_inv_sqrt(grad_at_star),
          bracket.lower_curv.apply_inv_sqrt(grad_at_star)};
}

std::pair<double, double> bracket_process_eval(const Bracket& bracket,
                                               const VectorXd& grad_at_star,
                                               const VectorXd& theta,
                                               const VectorXd& theta_star) {
  if (!bracket.valid)
    throw std::domain_error("bracket_process_eval: invalid bracket");
  const VectorXd diff = theta - theta_star;
  const double linear = diff.dot(grad_at_star);
  return {linear - 0.5 * bracket.upper_curv.quad(diff),
          linear - 0.5 * bracket.lower_curv.quad(diff)};
}

double err_bound(double x, int p, double g, double nu) {
  if (x < 0.0) throw std::invalid_argument("err_bound: x must be nonnegative");
  const double gd = g * nu;
  if (!(gd >= 3.0))
    throw std::domain_error("err_bound: bound inapplicable, g * nu < 3");
  const double s = x + entropy_q(p);
  const double root = 1.0 + std::sqrt(s);
  if (root <= gd) return root * root;
  const double tail = 2.0 * s / gd + gd;
  return 1.0 + tail * tail;
}

QuadTailValue quad_tail(double x, const TailParams& tail) {
  if (x < 0.0) throw std::invalid_argument("quad_tail: x must be nonnegative");
  if (tail.nu != 1.0)
    throw std::domain_error("quad_tail: constants require nu = 1");
  if (!(tail.g * tail.g >= 2.0 * tail.dim_a))
    throw std::domain_error("quad_tail: range too small, g^2 < 2 dim_a");
  QuadTailValue out;
  const double va = std::sqrt(tail.va2);
  if (x <= va / 18.0) {
    out.branch = 1;
    out.z = tail.dim_a + 2.0 * va * std::sqrt(x);
    out.tail_prob = 2.0 * std::exp(-x) + 8.4 * std::exp(-tail.xc);
  } else if (x <= tail.xc) {
    out.branch = 2;
    out.z = tail.dim_a + 6.0 * x;
    out.tail_prob = 2.0 * std::exp(-x) + 8.4 * std::exp(-tail.xc);
  } else {
    out.branch = 3;
    const double y = tail.yc + 2.0 * (x - tail.xc) / tail.gc;
    out.z = y * y;
    out.tail_prob = 8.4 * std::exp(-x);
  }
  return out;
}

std::pair<double, double> tau_alpha(double delta, double omega, double a) {
  if (delta < 0.0 || omega < 0.0 || a < 0.0)
    throw std::invalid_argument("tau_alpha: arguments must be nonnegative");
  const double tau = delta + omega * a * a;
  if (!(tau < 1.0)) throw std::domain_error("tau_alpha: bracket too wide");
  const double alpha = 2.0 * tau / (1.0 - tau * tau);
  return {tau, alpha};
}

double spread_bound(double omega, double zq, double alpha, double lambda0,
                    double z) {
  if (omega < 0.0 || zq < 0.0 || alpha < 0.0 || lambda0 < 0.0 || z < 0.0)
    throw std::invalid_argument("spread_bound: arguments must be nonnegative");
  return 2.0 * omega * zq + alpha * lambda0 * z;
}

SpreadReport spread_empirical(double err_upper, double err_lower,
                              const VectorXd& xi_upper,
                              const VectorXd& xi_lower, double tau,
                              double alpha) {
  SpreadReport report;
  report.err_upper = err_upper;
  report.err_lower = err_lower;
  report.half_norm_gap =
      0.5 * (xi_upper.squaredNorm() - xi_lower.squaredNorm());
  report.spread = err_upper + err_lower + report.half_norm_gap;
  report.tau = tau;
  report.alpha = alpha;
  return report;
}

ConcentrationResult concentration_radius(
    double x, int p, double nu, double b,
    const std::function<double(double)>& g_of_r) {
  if (x < 0.0 || nu <= 0.0)
    throw std::invalid_argument("concentration_radius: bad x or nu");
  if (!(b > 0.0))
    throw std::invalid_argument("concentration_radius: b must be positive");
  ConcentrationResult res;
  const double s = x + entropy_q(p);
  res.r0 = 6.0 * nu * std::sqrt(s) / b;
  if (s < 2.5) {
    res.reason = "x + Q below 2.5";
    return res;
  }
  const double need = 1.0 + std::sqrt(s);
  const double have = 3.0 * nu * nu * g_of_r(res.r0) / b;
  if (!(need <= have)) {
    res.reason = "exponential-moment range too small: 1 + sqrt(x + Q) "
                 "exceeds 3 nu^2 g(r0) / b";
    return res;
  }
  res.feasible = true;
  res.guarantee = std::exp(-x);
  res.schedule.push_back({0, res.r0, b});
  return res;
}

ConcentrationResult concentration_radius_varying(
    double x, int p, double nu, const GlobalLowerTable& lower,
    const std::function<double(double)>& g_of_r) {
  if (x < 0.0 || nu <= 0.0)
    throw std::invalid_argument("concentration_radius_varying: bad x or nu");
  ConcentrationResult res;
  const double s = x + entropy_q(p);
  if (s < 2.5) {
    res.reason = "x + Q below 2.5";
    return res;
  }
  if (lower.r.empty() || lower.b.empty()) {
    res.reason = "empty lower-growth table";
    return res;
  }
  // Re-check the precondition from the raw table rather than trusting the
  // stored flag: r b(r) must be nondecreasing.
  for (std::size_t j = 1; j < lower.r.size(); ++j) {
    const double prev = lower.r[j - 1] * lower.b[j - 1];
    const double cur = lower.r[j] * lower.b[j];
    if (cur < prev * (1.0 - 1e-9)) {
      res.reason = "r b(r) not nondecreasing";
      return res;
    }
  }
  const double r_top = lower.r_max();
  const double c_level = std::log(2.0);

  // Largest radius in [r_lo, r_top] with b(r) >= target; b(r) need not be
  // monotone pointwise, but r b(r) nondecreasing makes the bisection sound
  // up to table resolution.
  auto widest_with = [&](double r_lo, double target) {
    if (lower.b_at(r_top) >= target) return r_top;
    double lo = r_lo, hi = r_top;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (lower.b_at(mid) >= target)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  };

  auto feasible_at = [&](double r0, std::vector<ConcentrationStep>* sched) {
    const double b0 = lower.b_at(r0);
    if (!(b0 > 0.0) || !std::isfinite(b0)) return false;
    if (6.0 * nu * std::sqrt(s) > r0 * b0) return false;
    if (1.0 + std::sqrt(s) > 3.0 * nu * nu * g_of_r(r0) / b0) return false;
    if (sched) sched->push_back({0, r0, b0});
    for (int k = 1; k <= 64; ++k) {
      const double target = b0 * std::pow(2.0, -k);
      const double rk = widest_with(r0, target);
      const double bk = lower.b_at(rk);
      const double sk = s + c_level * static_cast<double>(k);
      if (6.0 * nu * std::sqrt(sk) > rk * bk) return false;
      if (1.0 + std::sqrt(sk) > 3.0 * nu * nu * g_of_r(rk) / bk) return false;
      if (sched) sched->push_back({k, rk, bk});
      if (rk >= r_top * (1.0 - 1e-12)) break;  // table edge reached
    }
    return true;
  };

  // Minimal feasible base radius: geometric scan, then bisection against the
  // last infeasible candidate.  Feasibility is monotone in r0 because
  // r b(r) is nondecreasing and the range condition relaxes as b falls.
  const double r_lo_scan = std::max(1e-8, lower.r.front() / 16.0);
  const int scan_steps = 160;
  double prev = 0.0;
  double found = -1.0;
  for (int i = 0; i <= scan_steps; ++i) {
    const double t = static_cast<double>(i) / scan_steps;
    const double cand = r_lo_scan * std::pow(r_top / r_lo_scan, t);
    if (feasible_at(cand, nullptr)) {
      found = cand;
      break;
    }
    prev = cand;
  }
  if (found < 0.0) {
    res.reason = "no feasible radius within the table range";
    return res;
  }
  double lo = prev, hi = found;
  if (lo > 0.0) {
    for (int it = 0; it < 70; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible_at(mid, nullptr))
        hi = mid;
      else
        lo = mid;
    }
  }
  res.r0 = hi;
  res.feasible = true;
  res.guarantee = std::exp(-x);
  feasible_at(res.r0, &res.schedule);
  return res;
}

double confidence_critical(double x, const TailParams& tail,
                           double err_upper_bound) {
  if (err_upper_bound < 0.0)
    throw std::invalid_argument("confidence_critical: negative error bound");
  return tail.lambda0 * quad_tail(x, tail).z + err_upper_bound;
}

}  // namespace fsmle
