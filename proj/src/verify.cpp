#include "fsmle/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "fsmle/estimation.hpp"
#include "fsmle/rng.hpp"

namespace fsmle {

namespace {

constexpr std::uint64_t kTagSyntheticTail = 0x7461696cULL;

// Wilson 95% interval; degenerate inputs get the full interval.
std::pair<double, double> wilson_ci(long hits, long total) {
  if (total <= 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double ph = static_cast<double>(hits) / total;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / total;
  const double center = (ph + z2 / (2.0 * total)) / denom;
  const double half =
      z *
      std::sqrt(ph * (1.0 - ph) / total + z2 / (4.0 * total * total)) /
      denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// Three binomial standard errors at the stated bound.
double three_sigma(double bound, long total) {
  const double b = std::clamp(bound, 0.0, 1.0);
  if (total <= 0) return 0.0;
  return 3.0 * std::sqrt(b * (1.0 - b) / static_cast<double>(total));
}

CheckReport frequency_report(const std::string& name, double x, long hits,
                             long total, long excluded, double bound) {
  CheckReport rep;
  rep.name = name;
  rep.x = x;
  rep.used = static_cast<int>(total);
  rep.excluded = static_cast<int>(excluded);
  rep.empirical = total > 0 ? static_cast<double>(hits) / total : 0.0;
  rep.bound = bound;
  auto ci = wilson_ci(hits, total);
  rep.ci_lo = ci.first;
  rep.ci_hi = ci.second;
  rep.pass = rep.empirical <= bound + three_sigma(bound, total);
  return rep;
}

CheckReport skipped_report(const std::string& name, double x,
                           const std::string& why) {
  CheckReport rep;
  rep.name = name;
  rep.x = x;
  rep.pass = true;
  rep.note = "skipped: " + why;
  return rep;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool on_c_set(const ReplicationRecord& rec) {
  return rec.converged && rec.in_locality && rec.lower_solution_local &&
         rec.lower_point_feasible;
}

// Tail params of the upper bracket pair, needed by coverage and the local
// deviation check; throws when outside the tail theorem's domain.
TailParams upper_tail(const ScenarioContext& ctx) {
  return spectral_stats(ctx.bracket.upper_curv, ctx.geometry.score_cov, 1.0,
                        ctx.geometry.g);
}

double error_term_bound(const ScenarioContext& ctx, double x) {
  if (ctx.omega == 0.0) return 0.0;
  return 2.0 * ctx.omega *
         err_bound(x, ctx.geometry.theta_star.size(), ctx.geometry.g,
                   ctx.geometry.nu);
}

}  // namespace

ScenarioContext prepare_scenario(const Scenario& scenario,
                                 double x_for_radius) {
  const Model& model = scenario.model;
  ScenarioContext ctx;
  ctx.x_for_radius = x_for_radius;
  ctx.geometry = analyze_geometry(model);
  const LocalGeometry& geo = ctx.geometry;

  if (scenario.r > 0.0) {
    ctx.r = scenario.r;
    ctx.r_auto = false;
  } else {
    ctx.r_auto = true;
    const double g_const = geo.g;
    ctx.concentration = concentration_radius_varying(
        x_for_radius, model.p, geo.nu, geo.lower,
        [g_const](double) { return g_const; });
    ctx.r = ctx.concentration.feasible
                ? ctx.concentration.r0
                : 4.0 * std::sqrt(static_cast<double>(model.p));
  }

  // Probe grid: K directions, J radii geometric with ratio sqrt(2) ending at
  // r, mapped through V^{-1} so each point sits on a locality sphere.  Only
  // points inside the natural-parameter domain are kept.
  const MatrixXd dirs =
      sphere_directions(model.p, std::max(1, scenario.grid.directions));
  const int radii = std::max(1, scenario.grid.radii);
  for (int j = 1; j <= radii; ++j) {
    const double s = ctx.r * std::pow(2.0, -0.5 * (radii - j));
    for (int k = 0; k < dirs.rows(); ++k) {
      VectorXd offset =
          s * geo.score_cov.apply_inv_sqrt(dirs.row(k).transpose());
      if (theta_feasible(model, geo.theta_star + offset))
        ctx.grid_offsets.push_back(std::move(offset));
    }
  }

  // Strengthen the tabulated modulus by the probe grid's own modulus so the
  // sandwich check is deterministic on that grid.
  std::vector<VectorXd> points;
  points.reserve(ctx.grid_offsets.size());
  for (const VectorXd& off : ctx.grid_offsets)
    points.push_back(geo.theta_star + off);
  double delta = geo.moduli.delta_at(ctx.r);
  if (!points.empty())
    delta = std::max(delta, delta_on_points(model, geo.theta_star,
                                            geo.curvature, points));
  ctx.delta = delta;
  ctx.omega = 3.0 * geo.nu * geo.moduli.rho_at(ctx.r);
  ctx.bracket =
      make_bracket(geo.curvature, geo.score_cov, ctx.delta, ctx.omega, ctx.r);
  if (ctx.bracket.valid) {
    const double t = ctx.delta + ctx.omega * geo.a * geo.a;
    if (t < 1.0) {
      auto ta = tau_alpha(ctx.delta, ctx.omega, geo.a);
      ctx.tau = ta.first;
      ctx.alpha = ta.second;
    } else {
      ctx.tau = t;
      ctx.alpha = std::numeric_limits<double>::infinity();
    }
  }
  return ctx;
}

std::vector<ReplicationRecord> run_replications(const Scenario& scenario,
                                                const ScenarioContext& ctx) {
  const Model& model = scenario.model;
  const int total = scenario.replications;
  if (total < 1)
    throw std::invalid_argument("run_replications: need at least 1 rep");
  std::vector<ReplicationRecord> records(total);

  const LocalGeometry& geo = ctx.geometry;
  const Spd& v2 = geo.score_cov;
  const bool usable = ctx.bracket.valid;

  MatrixXd upper_root, lower_inv;
  if (usable) {
    upper_root = ctx.bracket.upper_curv.sqrt();
    lower_inv = ctx.bracket.lower_curv.inverse();
  }

  // Data-independent grid quantities, hoisted out of the replication loop.
  const std::size_t gp = ctx.grid_offsets.size();
  std::vector<double> el_diff(gp), pen0(gp), quad_u(gp), quad_l(gp);
  const double el_star = mean_loglik(model, geo.theta_star);
  for (std::size_t i = 0; i < gp; ++i) {
    const VectorXd& off = ctx.grid_offsets[i];
    el_diff[i] = mean_loglik(model, geo.theta_star + off) - el_star;
    pen0[i] = v2.quad(off);
    if (usable) {
      quad_u[i] = ctx.bracket.upper_curv.quad(off);
      quad_l[i] = ctx.bracket.lower_curv.quad(off);
    }
  }

  auto run_one = [&](int k) {
    ReplicationRecord rec;
    rec.rep = k;
    const VectorXd y = sample_data(model, scenario.master_seed,
                                   static_cast<std::uint64_t>(k));
    const FitResult fit = fit_qmle(model, y);
    rec.converged = fit.converged;
    rec.theta_hat = fit.theta;
    if (!rec.converged) {
      records[k] = std::move(rec);
      return;
    }
    const VectorXd& star = geo.theta_star;
    const VectorXd grad = centered_grad(model, y, star);
    rec.xi = normalized_score(grad, geo.curvature);
    rec.excess = excess(model, y, fit.theta, star);
    const VectorXd diff = fit.theta - star;
    rec.vnorm_dev = std::sqrt(std::max(0.0, v2.quad(diff)));
    rec.in_locality = rec.vnorm_dev <= ctx.r;

    if (usable) {
      auto scores = bracket_score(ctx.bracket, grad);
      rec.xi_upper = std::move(scores.first);
      rec.xi_lower = std::move(scores.second);
      const VectorXd lower_diff = lower_inv * grad;
      rec.lower_solution_local =
          std::sqrt(std::max(0.0, v2.quad(lower_diff))) <= ctx.r;
      rec.lower_point_feasible = theta_feasible(model, star + lower_diff);
      rec.dnorm_upper =
          std::sqrt(std::max(0.0, ctx.bracket.upper_curv.quad(diff)));
      rec.fisher_residual = (upper_root * diff - rec.xi_upper).squaredNorm();

      const double l_star = loglik(model, y, star);
      struct Probe {
        double l_diff, lambda_u, lambda_l, res_u, res_l;
      };
      std::vector<Probe> probes;
      probes.reserve(gp + 2);
      auto add_probe = [&](double l_diff, double el_d, double lin,
                           double pen_raw, double qu, double ql) {
        if (!std::isfinite(l_diff)) return;
        const double zeta = l_diff - el_d;
        const double pen = 0.5 * ctx.omega * pen_raw;
        probes.push_back({l_diff, lin - 0.5 * qu, lin - 0.5 * ql,
                          zeta - lin - pen, lin - zeta - pen});
      };
      for (std::size_t i = 0; i < gp; ++i) {
        const VectorXd& off = ctx.grid_offsets[i];
        add_probe(loglik(model, y, star + off) - l_star, el_diff[i],
                  off.dot(grad), pen0[i], quad_u[i], quad_l[i]);
      }
      auto add_random_point = [&](const VectorXd& theta) {
        if (!theta_feasible(model, theta)) return;
        const VectorXd d = theta - star;
        add_probe(loglik(model, y, theta) - l_star,
                  mean_loglik(model, theta) - el_star, d.dot(grad),
                  v2.quad(d), ctx.bracket.upper_curv.quad(d),
                  ctx.bracket.lower_curv.quad(d));
      };
      if (rec.in_locality) add_random_point(fit.theta);
      if (rec.lower_solution_local && rec.lower_point_feasible)
        add_random_point(star + lower_diff);

      double err_u = 0.0, err_l = 0.0;
      for (const Probe& pr : probes) {
        err_u = std::max(err_u, pr.res_u);
        err_l = std::max(err_l, pr.res_l);
      }
      int violations = 0;
      for (const Probe& pr : probes) {
        const double tol = 1e-7 * (1.0 + std::abs(pr.l_diff));
        if (pr.l_diff > pr.lambda_u + err_u + tol) ++violations;
        if (pr.l_diff < pr.lambda_l - err_l - tol) ++violations;
      }
      rec.err_upper_emp = err_u;
      rec.err_lower_emp = err_l;
      rec.spread_emp =
          err_u + err_l +
          0.5 * (rec.xi_upper.squaredNorm() - rec.xi_lower.squaredNorm());
      rec.sandwich_violations = violations;
      rec.grid_used = static_cast<int>(probes.size());
    }
    records[k] = std::move(rec);
  };

  int workers = scenario.workers > 0
                    ? scenario.workers
                    : static_cast<int>(
                          std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, total);
  if (workers <= 1) {
    for (int k = 0; k < total; ++k) run_one(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int k = next.fetch_add(1);
          if (k >= total) return;
          run_one(k);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  return records;
}

CheckReport check_bracketing_sandwich(const std::vector<ReplicationRecord>& records,
                                      const ScenarioContext& ctx) {
  if (!ctx.bracket.valid)
    return skipped_report("bracketing_sandwich", 0.0, "bracket invalid");
  long checks = 0, violations = 0, excluded = 0;
  for (const auto& rec : records) {
    if (!rec.converged) {
      ++excluded;
      continue;
    }
    checks += 2L * rec.grid_used;
    violations += rec.sandwich_violations;
  }
  CheckReport rep;
  rep.name = "bracketing_sandwich";
  rep.used = static_cast<int>(records.size() - excluded);
  rep.excluded = static_cast<int>(excluded);
  rep.empirical = checks > 0 ? static_cast<double>(violations) / checks : 0.0;
  rep.bound = 0.0;
  auto ci = wilson_ci(violations, checks);
  rep.ci_lo = ci.first;
  rep.ci_hi = ci.second;
  rep.pass = violations == 0;
  rep.note = "grid inequalities checked: " + std::to_string(checks);
  return rep;
}

CheckReport check_error_tail(const std::vector<ReplicationRecord>& records,
                             const ScenarioContext& ctx, double x) {
  if (!ctx.bracket.valid)
    return skipped_report("error_tail", x, "bracket invalid");
  double threshold = 0.0;
  if (ctx.omega > 0.0) {
    try {
      threshold = ctx.omega * err_bound(x, ctx.geometry.theta_star.size(),
                                        ctx.geometry.g, ctx.geometry.nu);
    } catch (const std::domain_error& e) {
      return skipped_report("error_tail", x, e.what());
    }
  }
  // Floating-point allowance: the residual process is a difference of O(n)
  // sums, so exact zeros (omega = 0) come back as ~1e-12 noise.
  const double cut = threshold + 1e-9 * (1.0 + threshold);
  long total = 0, upper_hits = 0, lower_hits = 0, excluded = 0;
  for (const auto& rec : records) {
    if (!rec.converged) {
      ++excluded;
      continue;
    }
    ++total;
    if (rec.err_upper_emp > cut) ++upper_hits;
    if (rec.err_lower_emp > cut) ++lower_hits;
  }
  CheckReport rep = frequency_report("error_tail", x, upper_hits, total,
                                     excluded, std::exp(-x));
  const double lower_freq =
      total > 0 ? static_cast<double>(lower_hits) / total : 0.0;
  rep.pass = rep.pass &&
             lower_freq <= rep.bound + three_sigma(rep.bound, total);
  rep.note = "threshold " + format_g(threshold) + ", lower-process frequency " +
             format_g(lower_freq);
  if (ctx.omega == 0.0)
    rep.note += "; omega = 0, error terms identically zero";
  return rep;
}

CheckReport check_wilks(const std::vector<ReplicationRecord>& records) {
  long used = 0, excluded = 0, violations = 0;
  for (const auto& rec : records) {
    if (!rec.converged || rec.xi_upper.size() == 0 || !rec.in_locality) {
      ++excluded;
      continue;
    }
    ++used;
    const double tol = 1e-7 * (1.0 + std::abs(rec.excess));
    bool bad = rec.excess >
               0.5 * rec.xi_upper.squaredNorm() + rec.err_upper_emp + tol;
    // The lower half additionally needs the lower-bracket solution inside
    // the locality set; the upper half applies on the locality set alone.
    if (rec.lower_solution_local && rec.lower_point_feasible &&
        rec.excess < 0.5 * rec.xi_lower.squaredNorm() - rec.err_lower_emp - tol)
      bad = true;
    if (bad) ++violations;
  }
  CheckReport rep;
  rep.name = "wilks";
  rep.used = static_cast<int>(used);
  rep.excluded = static_cast<int>(excluded);
  rep.empirical = used > 0 ? static_cast<double>(violations) / used : 0.0;
  rep.bound = 0.0;
  auto ci = wilson_ci(violations, used);
  rep.ci_lo = ci.first;
  rep.ci_hi = ci.second;
  rep.pass = violations == 0;
  if (used == 0) rep.note = "no records on the conditioning event";
  return rep;
}

CheckReport check_fisher(const std::vector<ReplicationRecord>& records) {
  long used = 0, excluded = 0, violations = 0;
  std::vector<double> residuals;
  for (const auto& rec : records) {
    if (!on_c_set(rec) || rec.xi_upper.size() == 0) {
      ++excluded;
      continue;
    }
    ++used;
    residuals.push_back(rec.fisher_residual);
    const double bound = 2.0 * rec.spread_emp;
    if (rec.fisher_residual > bound + 1e-7 * (1.0 + std::abs(bound)))
      ++violations;
  }
  CheckReport rep;
  rep.name = "fisher";
  rep.used = static_cast<int>(used);
  rep.excluded = static_cast<int>(excluded);
  rep.empirical = used > 0 ? static_cast<double>(violations) / used : 0.0;
  rep.bound = 0.0;
  auto ci = wilson_ci(violations, used);
  rep.ci_lo = ci.first;
  rep.ci_hi = ci.second;
  rep.pass = violations == 0;
  rep.note = "median residual " + format_g(median_of(residuals));
  return rep;
}

CheckReport check_coverage(const std::vector<ReplicationRecord>& records,
                           const ScenarioContext& ctx, double x) {
  if (!ctx.bracket.valid)
    return skipped_report("coverage", x, "bracket invalid");
  TailParams tail;
  double z_crit = 0.0;
  try {
    tail = upper_tail(ctx);
    z_crit = confidence_critical(x, tail, error_term_bound(ctx, x));
  } catch (const std::exception& e) {
    return skipped_report("coverage", x, e.what());
  }
  long total = 0, hits = 0, excluded = 0;
  for (const auto& rec : records) {
    if (!rec.converged) {
      ++excluded;
      continue;
    }
    ++total;
    if (rec.in_locality && 2.0 * rec.excess > z_crit) ++hits;
  }
  // Union bound: score tail plus, when the error term is present, the budget
  // for the event that it exceeds its own bound.
  double bound = 2.0 * std::exp(-x) + 8.4 * std::exp(-tail.xc);
  if (ctx.omega > 0.0) bound += std::exp(-x);
  CheckReport rep =
      frequency_report("coverage", x, hits, total, excluded, bound);
  rep.note = "critical value " + format_g(z_crit);
  return rep;
}

CheckReport check_concentration(const std::vector<ReplicationRecord>& records,
                                double r0, double x) {
  long total = 0, hits = 0, excluded = 0;
  for (const auto& rec : records) {
    if (!rec.converged) {
      ++excluded;
      continue;
    }
    ++total;
    if (rec.vnorm_dev > r0) ++hits;
  }
  CheckReport rep = frequency_report("concentration", x, hits, total,
                                     excluded, std::exp(-x));
  rep.note = "radius " + format_g(r0);
  return rep;
}

CheckReport check_concentration_local(const std::vector<ReplicationRecord>& records,
                                      const ScenarioContext& ctx, double x) {
  if (!ctx.bracket.valid)
    return skipped_report("concentration_local", x, "bracket invalid");
  double level = 0.0;
  try {
    TailParams tail = upper_tail(ctx);
    level = std::sqrt(confidence_critical(x, tail, error_term_bound(ctx, x)));
  } catch (const std::exception& e) {
    return skipped_report("concentration_local", x, e.what());
  }
  long lhs = 0, rhs = 0, total = 0, excluded = 0;
  for (const auto& rec : records) {
    if (!on_c_set(rec) || rec.xi_upper.size() == 0) {
      ++excluded;
      continue;
    }
    ++total;
    if (rec.dnorm_upper > level) ++lhs;
    if (rec.xi_upper.norm() +
            std::sqrt(2.0 * std::max(0.0, rec.spread_emp)) >=
        level - 1e-9)
      ++rhs;
  }
  CheckReport rep;
  rep.name = "concentration_local";
  rep.x = x;
  rep.used = static_cast<int>(total);
  rep.excluded = static_cast<int>(excluded);
  rep.empirical = total > 0 ? static_cast<double>(lhs) / total : 0.0;
  rep.bound = total > 0 ? static_cast<double>(rhs) / total : 0.0;
  auto ci = wilson_ci(lhs, total);
  rep.ci_lo = ci.first;
  rep.ci_hi = ci.second;
  rep.pass = lhs <= rhs;
  rep.note = "level " + format_g(level) +
             "; right side is the score-plus-spread frequency";
  return rep;
}

CheckReport check_quad_tail(const std::vector<ReplicationRecord>& records,
                            const TailParams& tail, double x) {
  double z = 0.0;
  double residual = 0.0;
  try {
    QuadTailValue qt = quad_tail(x, tail);
    z = qt.z;
    residual = 8.4 * std::exp(-tail.xc);
  } catch (const std::exception& e) {
    return skipped_report("quad_tail", x, e.what());
  }
  long total = 0, hits = 0, excluded = 0;
  for (const auto& rec : records) {
    if (!rec.converged) {
      ++excluded;
      continue;
    }
    ++total;
    if (rec.xi.squaredNorm() / tail.lambda0 >= z) ++hits;
  }
  const double bound = x <= tail.xc
                           ? 2.0 * std::exp(-x) + residual
                           : 8.4 * std::exp(-x);
  CheckReport rep =
      frequency_report("quad_tail", x, hits, total, excluded, bound);
  rep.note = "z " + format_g(z);
  return rep;
}

CheckReport check_quad_tail_mean(const std::vector<ReplicationRecord>& records,
                                 const TailParams& tail) {
  long total = 0, excluded = 0;
  double sum = 0.0, sumsq = 0.0;
  for (const auto& rec : records) {
    if (!rec.converged) {
      ++excluded;
      continue;
    }
    ++total;
    const double v = rec.xi.squaredNorm();
    sum += v;
    sumsq += v * v;
  }
  CheckReport rep;
  rep.name = "quad_tail_mean";
  rep.used = static_cast<int>(total);
  rep.excluded = static_cast<int>(excluded);
  if (total == 0) {
    rep.pass = true;
    rep.note = "skipped: no converged records";
    return rep;
  }
  const double mean = sum / total;
  const double var =
      std::max(0.0, sumsq / total - mean * mean) * total / std::max(1L, total - 1);
  const double se = std::sqrt(var / total);
  rep.empirical = mean;
  rep.bound = tail.dim_a;
  rep.ci_lo = mean - 1.959963984540054 * se;
  rep.ci_hi = mean + 1.959963984540054 * se;
  rep.pass = mean <= tail.dim_a + 3.0 * se;
  return rep;
}

CheckReport check_quad_tail_synthetic(const TailParams& tail, int draws,
                                      std::uint64_t seed, double x) {
  if (draws < 1)
    throw std::invalid_argument("check_quad_tail_synthetic: draws < 1");
  double z = 0.0;
  double bound = 0.0;
  try {
    QuadTailValue qt = quad_tail(x, tail);
    z = qt.z;
    bound = qt.tail_prob;
  } catch (const std::exception& e) {
    return skipped_report("quad_tail_synthetic", x, e.what());
  }
  const MatrixXd root = tail.B.sqrt();
  const int p = static_cast<int>(root.rows());
  Rng rng(seed);
  long hits = 0;
  VectorXd eta(p);
  for (int d = 0; d < draws; ++d) {
    for (int i = 0; i < p; ++i) eta(i) = rng.normal();
    const VectorXd xi = root * eta;
    if (xi.squaredNorm() / tail.lambda0 >= z) ++hits;
  }
  CheckReport rep =
      frequency_report("quad_tail_synthetic", x, hits, draws, 0, bound);
  rep.note = "z " + format_g(z) + ", gaussian scores with covariance B";
  return rep;
}

std::vector<CheckReport> check_risk_moments(const std::vector<ReplicationRecord>& records,
                                            const ScenarioContext& ctx) {
  if (!ctx.bracket.valid)
    return {skipped_report("risk_moments", 0.0, "bracket invalid")};
  std::vector<CheckReport> out;
  for (int power = 1; power <= 2; ++power) {
    double lhs_excess = 0.0, rhs_excess = 0.0;
    double lhs_loss = 0.0, rhs_loss = 0.0;
    long total = 0, excluded = 0;
    for (const auto& rec : records) {
      if (!rec.converged || rec.xi_upper.size() == 0) {
        ++excluded;
        continue;
      }
      ++total;
      if (rec.in_locality) {
        const double cap = 0.5 * rec.xi_upper.squaredNorm() + rec.err_upper_emp;
        lhs_excess += std::pow(std::max(0.0, rec.excess), power);
        rhs_excess += std::pow(std::max(0.0, cap), power);
      }
      if (on_c_set(rec)) {
        const double cap = rec.xi_upper.norm() +
                           std::sqrt(2.0 * std::max(0.0, rec.spread_emp));
        lhs_loss += std::pow(rec.dnorm_upper, power);
        rhs_loss += std::pow(cap, power);
      }
    }
    auto make = [&](const std::string& name, double lhs, double rhs) {
      CheckReport rep;
      rep.name = name;
      rep.x = power;
      rep.used = static_cast<int>(total);
      rep.excluded = static_cast<int>(excluded);
      rep.empirical = total > 0 ? lhs / total : 0.0;
      rep.bound = total > 0 ? rhs / total : 0.0;
      rep.pass = rep.empirical <= rep.bound * (1.0 + 1e-9) + 1e-12;
      return rep;
    };
    out.push_back(make("risk_excess_p" + std::to_string(power), lhs_excess,
                       rhs_excess));
    out.push_back(
        make("risk_loss_p" + std::to_string(power), lhs_loss, rhs_loss));
  }
  return out;
}

CheckReport check_dimension_scaling(const std::vector<Scenario>& family) {
  CheckReport rep;
  rep.name = "dimension_scaling";
  if (family.size() < 2) {
    rep.pass = true;
    rep.note = "skipped: need at least two dimensions";
    return rep;
  }
  std::vector<double> wilks_norm, fisher_norm;
  std::string detail;
  for (const Scenario& sc : family) {
    ScenarioContext ctx = prepare_scenario(sc);
    std::vector<ReplicationRecord> records = run_replications(sc, ctx);
    std::vector<double> wilks_dev, fisher_dev;
    const MatrixXd root = ctx.geometry.curvature.sqrt();
    for (const auto& rec : records) {
      if (!rec.converged) continue;
      wilks_dev.push_back(
          std::abs(2.0 * rec.excess - rec.xi.squaredNorm()));
      fisher_dev.push_back(
          (root * (rec.theta_hat - ctx.geometry.theta_star) - rec.xi)
              .squaredNorm());
    }
    const double p = static_cast<double>(sc.model.p);
    wilks_norm.push_back(median_of(wilks_dev) / p);
    fisher_norm.push_back(median_of(fisher_dev) / p);
    detail += (detail.empty() ? "p=" : "; p=") + std::to_string(sc.model.p) +
              " wilks/p " + format_g(wilks_norm.back()) + " fisher/p " +
              format_g(fisher_norm.back());
  }
  bool ok = true;
  for (std::size_t i = 1; i < wilks_norm.size(); ++i) {
    if (wilks_norm[i] > wilks_norm[i - 1] + 1e-12) ok = false;
    if (fisher_norm[i] > fisher_norm[i - 1] + 1e-12) ok = false;
  }
  rep.empirical = wilks_norm.back();
  rep.bound = wilks_norm.front();
  rep.used = static_cast<int>(family.size());
  rep.pass = ok;
  rep.note = detail;
  return rep;
}

std::vector<CheckReport> run_all_checks(const Scenario& scenario,
                                        const ScenarioContext& ctx,
                                        const std::vector<ReplicationRecord>& records) {
  std::vector<CheckReport> out;
  out.push_back(check_bracketing_sandwich(records, ctx));
  for (double x : scenario.x_levels)
    out.push_back(check_error_tail(records, ctx, x));
  out.push_back(check_wilks(records));
  out.push_back(check_fisher(records));
  for (double x : scenario.x_levels)
    out.push_back(check_coverage(records, ctx, x));
  {
    double r0 = ctx.r;
    bool have_radius = true;
    std::string why;
    if (ctx.r_auto && !ctx.concentration.feasible) {
      have_radius = false;
      why = "no feasible concentration radius: " + ctx.concentration.reason;
    }
    if (have_radius) {
      CheckReport rep =
          check_concentration(records, r0, ctx.x_for_radius);
      rep.note += ctx.r_auto ? " (from the concentration theorem)"
                             : " (user-pinned)";
      out.push_back(std::move(rep));
    } else {
      out.push_back(skipped_report("concentration", ctx.x_for_radius, why));
    }
  }
  for (double x : scenario.x_levels)
    out.push_back(check_concentration_local(records, ctx, x));
  try {
    TailParams tail = spectral_stats(ctx.geometry.curvature,
                                     ctx.geometry.score_cov, 1.0,
                                     ctx.geometry.g);
    for (double x : scenario.x_levels)
      out.push_back(check_quad_tail(records, tail, x));
    out.push_back(check_quad_tail_mean(records, tail));
    for (double x : scenario.x_levels)
      out.push_back(check_quad_tail_synthetic(
          tail, 100000, stream_seed(scenario.master_seed, 0, kTagSyntheticTail),
          x));
  } catch (const std::exception& e) {
    out.push_back(skipped_report("quad_tail", 0.0, e.what()));
  }
  for (CheckReport& rep : check_risk_moments(records, ctx))
    out.push_back(std::move(rep));
  return out;
}

namespace {

std::string one_line(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return out;
}

nlohmann::json config_json(const std::string& config_echo) {
  try {
    return nlohmann::json::parse(config_echo);
  } catch (...) {
    return nlohmann::json(config_echo);
  }
}

}  // namespace

void write_records_csv(const std::string& path,
                       const std::vector<ReplicationRecord>& records,
                       const std::string& config_echo) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# config " << one_line(config_echo) << "\n";
  const int p = records.empty() ? 0 : static_cast<int>(records[0].theta_hat.size());
  out << "rep,converged,excess,vnorm_dev,in_locality,lower_solution_local,"
         "lower_point_feasible,err_upper_emp,err_lower_emp,spread_emp,"
         "fisher_residual,dnorm_upper,xi_sq,xi_upper_sq,xi_lower_sq,"
         "sandwich_violations,grid_used";
  for (int j = 0; j < p; ++j) out << ",theta_hat_" << j;
  out << "\n";
  for (const auto& rec : records) {
    out << rec.rep << ',' << (rec.converged ? 1 : 0) << ','
        << format_g(rec.excess) << ',' << format_g(rec.vnorm_dev) << ','
        << (rec.in_locality ? 1 : 0) << ','
        << (rec.lower_solution_local ? 1 : 0) << ','
        << (rec.lower_point_feasible ? 1 : 0) << ','
        << format_g(rec.err_upper_emp) << ',' << format_g(rec.err_lower_emp)
        << ',' << format_g(rec.spread_emp) << ','
        << format_g(rec.fisher_residual) << ',' << format_g(rec.dnorm_upper)
        << ',' << format_g(rec.xi.size() ? rec.xi.squaredNorm() : 0.0) << ','
        << format_g(rec.xi_upper.size() ? rec.xi_upper.squaredNorm() : 0.0)
        << ','
        << format_g(rec.xi_lower.size() ? rec.xi_lower.squaredNorm() : 0.0)
        << ',' << rec.sandwich_violations << ',' << rec.grid_used;
    for (int j = 0; j < p; ++j)
      out << ','
          << format_g(j < rec.theta_hat.size() ? rec.theta_hat(j) : 0.0);
    out << "\n";
  }
}

namespace {

nlohmann::json report_json(const CheckReport& rep) {
  return nlohmann::json{
      {"name", rep.name},       {"x", rep.x},
      {"empirical", rep.empirical}, {"bound", rep.bound},
      {"ci_lo", rep.ci_lo},     {"ci_hi", rep.ci_hi},
      {"used", rep.used},       {"excluded", rep.excluded},
      {"pass", rep.pass},       {"note", rep.note}};
}

}  // namespace

void write_reports_json(const std::string& path,
                        const std::vector<CheckReport>& reports,
                        const ScenarioContext& ctx,
                        const std::string& config_echo) {
  nlohmann::json doc;
  doc["config"] = config_json(config_echo);
  nlohmann::json geo;
  geo["r"] = ctx.r;
  geo["r_auto"] = ctx.r_auto;
  geo["x_for_radius"] = ctx.x_for_radius;
  geo["delta"] = ctx.delta;
  geo["omega"] = ctx.omega;
  geo["tau"] = ctx.tau;
  geo["alpha"] = std::isfinite(ctx.alpha) ? nlohmann::json(ctx.alpha)
                                          : nlohmann::json("infinite");
  geo["bracket_valid"] = ctx.bracket.valid;
  geo["effective_n"] = ctx.geometry.effective_n;
  geo["g"] = ctx.geometry.g;
  geo["theta_star"] = std::vector<double>(
      ctx.geometry.theta_star.data(),
      ctx.geometry.theta_star.data() + ctx.geometry.theta_star.size());
  if (ctx.r_auto) {
    geo["concentration_feasible"] = ctx.concentration.feasible;
    geo["concentration_reason"] = ctx.concentration.reason;
    geo["concentration_r0"] = ctx.concentration.r0;
  }
  doc["scenario"] = geo;
  doc["checks"] = nlohmann::json::array();
  for (const auto& rep : reports) doc["checks"].push_back(report_json(rep));
  bool all_pass = true;
  for (const auto& rep : reports) all_pass = all_pass && rep.pass;
  doc["all_pass"] = all_pass;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << "\n";
}

void write_reports_csv(const std::string& path,
                       const std::vector<CheckReport>& reports,
                       const std::string& config_echo) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# config " << one_line(config_echo) << "\n";
  out << "check,x,empirical,bound,ci_lo,ci_hi,used,excluded,pass\n";
  for (const auto& rep : reports) {
    out << rep.name << ',' << format_g(rep.x) << ',' << format_g(rep.empirical)
        << ',' << format_g(rep.bound) << ',' << format_g(rep.ci_lo) << ','
        << format_g(rep.ci_hi) << ',' << rep.used << ',' << rep.excluded << ','
        << (rep.pass ? 1 : 0) << "\n";
  }
}

}  // namespace fsmle
