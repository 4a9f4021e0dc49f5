#include "fsmle/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace fsmle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream tags reserved by this translation unit (data sampling uses 1,
// kernel-law draws 2; see model.cpp).
constexpr std::uint64_t kTagMoments = 3;
constexpr std::uint64_t kTagProbeDraws = 4;
constexpr std::uint64_t kTagCalibration = 5;

// Root of x^{p+1} = x + 1, the base of the rank-1 lattice.
double lattice_root(int p) {
  double x = 1.5;
  for (int it = 0; it < 64; ++it) {
    double f = std::pow(x, p + 1) - x - 1.0;
    double df = (p + 1) * std::pow(x, p) - 1.0;
    double step = f / df;
    x -= step;
    if (std::fabs(step) < 1e-15) break;
  }
  return x;
}

double frac(double x) { return x - std::floor(x); }

// Central moments around the exact mean of the law.
struct CentralMoments {
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
};

CentralMoments law_central_moments(const ScalarLaw& law, int samples,
                                   Rng& rng) {
  double m = law.mean();
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (int i = 0; i < samples; ++i) {
    double z = law.sample(rng) - m;
    double z2 = z * z;
    s1 += z;
    s2 += z2;
    s3 += z2 * z;
    s4 += z2 * z2;
  }
  double inv = 1.0 / samples;
  double zb = s1 * inv;
  CentralMoments cm;
  cm.c2 = s2 * inv - zb * zb;
  cm.c3 = s3 * inv - 3.0 * zb * s2 * inv + 2.0 * zb * zb * zb;
  cm.c4 = s4 * inv - 4.0 * zb * s3 * inv + 6.0 * zb * zb * s2 * inv -
          3.0 * zb * zb * zb * zb;
  return cm;
}

bool in_family(const Model& model) {
  return model.truth.kind == TruthSpec::Kind::InFamily;
}

// Piecewise-linear through (0,0) and the table, clamped to the last value.
double interp_from_zero(const std::vector<double>& xs,
                        const std::vector<double>& ys, double x) {
  if (!(x > 0.0) || xs.empty()) return 0.0;
  double x0 = 0.0, y0 = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (x <= xs[i]) {
      if (!std::isfinite(ys[i])) return x > x0 ? ys[i] : y0;
      double t = (x - x0) / (xs[i] - x0);
      return y0 + t * (ys[i] - y0);
    }
    x0 = xs[i];
    y0 = ys[i];
  }
  return ys.back();
}

std::string format_vector(const VectorXd& v) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ")";
  return os.str();
}

// The largest of the curvature-ratio norm and the quadratic-ratio deviation
// at a single point; +inf when the point leaves the natural domain or the
// arithmetic overflows.
double hybrid_delta_form(const Model& model, const VectorXd& theta_star,
                         const MatrixXd& curv_inv_sqrt, const Spd& curvature,
                         double el_star, const VectorXd& theta) {
  if (!theta_feasible(model, theta)) return kInf;
  VectorXd diff = theta - theta_star;
  double quad = curvature.quad(diff);
  if (!(quad > 0.0)) return 0.0;

  MatrixXd h = -mean_hess(model, theta);
  if (!h.allFinite()) return kInf;
  MatrixXd ratio_mat = curv_inv_sqrt * h * curv_inv_sqrt;
  double hess_form =
      sym_op_norm(MatrixXd::Identity(model.p, model.p) - ratio_mat);

  double el = mean_loglik(model, theta);
  if (!std::isfinite(el)) return kInf;
  double ratio_form = std::fabs(-2.0 * (el - el_star) / quad - 1.0);
  return std::max(hess_form, ratio_form);
}

// Damped Newton ascent on the exact mean log-likelihood.
TargetResult newton_target(const Model& model, VectorXd theta) {
  const int p = model.p;
  double f = mean_loglik(model, theta);
  if (!std::isfinite(f)) {
    throw std::invalid_argument("compute_target: infeasible starting point " +
                                format_vector(theta));
  }
  int iter = 0;
  for (; iter < 200; ++iter) {
    VectorXd g = mean_grad(model, theta);
    if (g.norm() <= 1e-10 * (1.0 + std::fabs(f))) break;
    MatrixXd h = -mean_hess(model, theta);
    double scale = std::max(h.trace() / p, 1e-12);
    VectorXd step;
    bool have_step = false;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 8 && !have_step; ++attempt) {
      Eigen::LDLT<MatrixXd> ldlt(h + ridge * MatrixXd::Identity(p, p));
      if (ldlt.info() == Eigen::Success) {
        VectorXd cand = ldlt.solve(g);
        if (cand.allFinite() && g.dot(cand) > 0.0) {
          step = cand;
          have_step = true;
        }
      }
      ridge = ridge == 0.0 ? 1e-10 * scale : ridge * 100.0;
    }
    if (!have_step) step = g / scale;

    double gs = g.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int h2 = 0; h2 < 60; ++h2) {
      VectorXd cand = theta + t * step;
      double fc = mean_loglik(model, cand);
      if (std::isfinite(fc) && fc >= f + 1e-4 * t * gs) {
        theta = cand;
        f = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  TargetResult out;
  out.theta_star = theta;
  out.grad_norm = mean_grad(model, theta).norm();
  out.iterations = iter;
  if (out.grad_norm > 1e-6 * (1.0 + std::fabs(f))) {
    throw std::runtime_error(
        "compute_target: no stationary point after 200 iterations, |grad| = " +
        std::to_string(out.grad_norm) + " at " + format_vector(theta));
  }
  return out;
}

// Feasible starting point: least-squares fit of the linear predictor that
// would reproduce the true observation means.
VectorXd start_theta(const Model& model) {
  VectorXd f = truth_means(model);
  VectorXd w(model.n);
  for (int i = 0; i < model.n; ++i) {
    double fi = f[i];
    if (model.cls == ModelClass::Lad) {
      w[i] = fi;
    } else {
      switch (model.kind) {
        case GlmKind::Logistic: {
          double q = std::min(std::max(fi, 1e-6), 1.0 - 1e-6);
          w[i] = std::log(q / (1.0 - q));
          break;
        }
        case GlmKind::Poisson:
          w[i] = std::log(std::max(fi, 1e-8));
          break;
        case GlmKind::Exponential:
          w[i] = -1.0 / std::min(fi, -1e-8);
          break;
        case GlmKind::Gaussian:
          w[i] = fi;
          break;
      }
    }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(model.design.rows);
  VectorXd theta = qr.solve(w);
  if (theta_feasible(model, theta)) return theta;
  // Natural-domain wall (exponential kind): blend toward the fit of a
  // constant positive predictor.
  VectorXd flat = qr.solve(VectorXd::Constant(model.n, std::max(w.mean(), 1e-2)));
  for (double t : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9}) {
    VectorXd cand = t * theta + (1.0 - t) * flat;
    if (theta_feasible(model, cand)) return cand;
  }
  throw std::runtime_error(
      "compute_target: no feasible starting point for the natural domain");
}

// M centered score draws at theta, one per row, from a dedicated stream.
MatrixXd centered_score_draws(const Model& model, const VectorXd& theta,
                              int samples, std::uint64_t master) {
  MatrixXd out(samples, model.p);
  VectorXd mg = mean_grad(model, theta);
  for (int s = 0; s < samples; ++s) {
    VectorXd y = sample_data(model, master, static_cast<std::uint64_t>(s));
    out.row(s) = (loglik_grad(model, y, theta) - mg).transpose();
  }
  return out;
}

double log_mgf(const VectorXd& t, double lambda) {
  Eigen::ArrayXd a = lambda * t.array();
  double m = a.maxCoeff();
  return m + std::log((a - m).exp().mean());
}

ExpMomentProbe probe_from_samples(const VectorXd& t,
                                  const std::vector<double>& lambda_grid) {
  ExpMomentProbe probe;
  for (double lam : lambda_grid) {
    if (std::fabs(lam) < 1e-12) continue;
    double val = log_mgf(t, lam);
    double ratio = 2.0 * val / (lam * lam);
    if (!std::isfinite(ratio)) {
      ++probe.dropped;
      continue;
    }
    probe.lambdas.push_back(lam);
    probe.worst_ratio = std::max(probe.worst_ratio, ratio);
  }
  return probe;
}

MatrixXd b_matrix(const Spd& curvature, const Spd& score_cov) {
  MatrixXd dm = curvature.inv_sqrt();
  MatrixXd b = dm * score_cov.mat() * dm;
  return 0.5 * (b + b.transpose());
}

}  // namespace

MatrixXd sphere_directions(int p, int count) {
  if (p < 1 || count < 1) {
    throw std::invalid_argument("sphere_directions: p and count must be >= 1");
  }
  MatrixXd out(count, p);
  if (p == 1) {
    for (int k = 0; k < count; ++k) out(k, 0) = (k % 2 == 0) ? 1.0 : -1.0;
    return out;
  }
  double phi = lattice_root(p);
  std::vector<double> alpha(p);
  double a = 1.0;
  for (int j = 0; j < p; ++j) {
    a /= phi;
    alpha[j] = a;
  }
  boost::math::normal_distribution<double> nd;
  for (int k = 0; k < count; ++k) {
    for (int j = 0; j < p; ++j) {
      double u = frac((k + 0.5) * alpha[j]);
      u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
      out(k, j) = boost::math::quantile(nd, u);
    }
    double norm = out.row(k).norm();
    if (norm < 1e-12) {
      out.row(k).setZero();
      out(k, 0) = 1.0;
    } else {
      out.row(k) /= norm;
    }
  }
  return out;
}

TargetResult compute_target(const Model& model) {
  TargetResult out;
  if (model.cls == ModelClass::Iid) {
    // Moment matching is exact for the location/log-scale Gaussian family.
    const ScalarLaw& law = model.law(0);
    out.theta_star = VectorXd(2);
    out.theta_star[0] = law.mean();
    out.theta_star[1] = 0.5 * std::log(law.variance());
    out.grad_norm = mean_grad(model, out.theta_star).norm();
    return out;
  }
  if (in_family(model)) {
    out.theta_star = model.truth.theta_true;
    out.grad_norm = mean_grad(model, out.theta_star).norm();
    return out;
  }
  return newton_target(model, start_theta(model));
}

FisherResult fisher_matrices(const Model& model, const VectorXd& theta_star) {
  FisherResult out;
  out.curvature = Spd(-mean_hess(model, theta_star));
  if (!out.curvature.is_invertible()) {
    throw std::domain_error(
        "fisher_matrices: curvature matrix is singular at the target");
  }
  switch (model.cls) {
    case ModelClass::Glm: {
      VectorXd s2 = model.scale.array().square();
      out.score_cov = Spd(model.design.rows.transpose() * s2.asDiagonal() *
                          model.design.rows);
      break;
    }
    case ModelClass::Lad: {
      out.score_cov =
          Spd(0.25 * model.design.rows.transpose() * model.design.rows);
      break;
    }
    case ModelClass::Iid: {
      const ScalarLaw& law = model.law(0);
      double v = law.variance();
      MatrixXd v0(2, 2);
      if (in_family(model)) {
        v0 << 1.0 / v, 0.0, 0.0, 2.0;
      } else {
        // Per-observation score covariance needs the third and fourth
        // central moments; estimate them in batches for an honest SE.
        constexpr int kBatches = 10;
        constexpr int kBatchSize = 100000;
        Rng rng(0x66697368ULL, 0, kTagMoments);
        double e01 = 0.0, e11 = 0.0, q01 = 0.0, q11 = 0.0;
        for (int b = 0; b < kBatches; ++b) {
          CentralMoments cm = law_central_moments(law, kBatchSize, rng);
          double a01 = cm.c3 / (v * v);
          double a11 = (cm.c4 - v * v) / (v * v);
          e01 += a01;
          e11 += a11;
          q01 += a01 * a01;
          q11 += a11 * a11;
        }
        e01 /= kBatches;
        e11 /= kBatches;
        double se01 = std::sqrt(std::max(q01 / kBatches - e01 * e01, 0.0) /
                                (kBatches - 1));
        double se11 = std::sqrt(std::max(q11 / kBatches - e11 * e11, 0.0) /
                                (kBatches - 1));
        v0 << 1.0 / v, e01, e01, e11;
        out.score_cov_se = model.n * std::max(se01, se11);
      }
      out.score_cov = Spd(model.n * v0);
      break;
    }
  }
  if (!out.score_cov.is_invertible()) {
    throw std::domain_error(
        "fisher_matrices: score covariance is singular at the target");
  }
  return out;
}

VectorXd normalized_score(const VectorXd& grad_at_star, const Spd& curvature) {
  return curvature.apply_inv_sqrt(grad_at_star);
}

double identifiability_constant(const Spd& curvature, const Spd& score_cov) {
  return std::sqrt(Spd(b_matrix(curvature, score_cov)).max_eig());
}

TailParams spectral_stats(const Spd& curvature, const Spd& score_cov,
                          double nu, double g) {
  TailParams tp;
  tp.B = Spd(b_matrix(curvature, score_cov));
  tp.dim_a = tp.B.trace();
  tp.va2 = 2.0 * tp.B.mat().squaredNorm();
  tp.lambda0 = tp.B.max_eig();
  tp.nu = nu;
  tp.g = g;
  if (!(g * g >= 2.0 * tp.dim_a)) {
    throw std::domain_error(
        "spectral_stats: tail constants undefined, g^2 < 2 tr B");
  }
  double yc2 = g * g / (tp.mu_c * tp.mu_c) - tp.dim_a / tp.mu_c;
  tp.yc = std::sqrt(yc2);
  tp.gc = tp.mu_c * tp.yc;
  MatrixXd bm = tp.B.mat();
  MatrixXd arg = MatrixXd::Identity(bm.rows(), bm.cols()) -
                 (tp.mu_c / tp.lambda0) * bm * bm;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(arg, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw std::domain_error(
        "spectral_stats: tail constants undefined, log-det argument is not "
        "positive definite");
  }
  tp.xc = 0.5 * (tp.mu_c * yc2 + es.eigenvalues().array().log().sum());
  return tp;
}

double ModuliTable::delta_at(double radius) const {
  return interp_from_zero(r, delta, radius);
}

double ModuliTable::rho_at(double radius) const {
  return interp_from_zero(r, rho, radius);
}

double delta_on_points(const Model& model, const VectorXd& theta_star,
                       const Spd& curvature,
                       const std::vector<VectorXd>& points) {
  MatrixXd dm = curvature.inv_sqrt();
  double el_star = mean_loglik(model, theta_star);
  double worst = 0.0;
  for (const VectorXd& theta : points) {
    worst = std::max(worst, hybrid_delta_form(model, theta_star, dm, curvature,
                                              el_star, theta));
  }
  return worst;
}

ModuliTable local_moduli(const Model& model, const VectorXd& theta_star,
                         const Spd& curvature, const Spd& score_cov,
                         const ModuliOptions& options) {
  ModuliTable table;
  table.r = options.r_grid;
  if (table.r.empty()) {
    double base = std::sqrt(static_cast<double>(model.p));
    for (int j = 0; j <= 18; ++j) {
      table.r.push_back(base * std::pow(2.0, (j - 8) / 2.0));
    }
  }
  std::sort(table.r.begin(), table.r.end());
  table.r.erase(std::unique(table.r.begin(), table.r.end()), table.r.end());
  if (!table.r.empty() && table.r.front() <= 0.0) {
    throw std::invalid_argument("local_moduli: radii must be positive");
  }

  const int nr = static_cast<int>(table.r.size());
  table.delta.assign(nr, 0.0);
  table.rho.assign(nr, 0.0);

  MatrixXd dirs = sphere_directions(model.p, options.directions);
  MatrixXd v_inv_sqrt = score_cov.inv_sqrt();
  MatrixXd d_inv_sqrt = curvature.inv_sqrt();
  double el_star = mean_loglik(model, theta_star);

  // Curvature modulus: worst hybrid form over probe spheres.
  for (int j = 0; j < nr; ++j) {
    double worst = 0.0;
    for (int k = 0; k < dirs.rows(); ++k) {
      VectorXd theta =
          theta_star + table.r[j] * (v_inv_sqrt * dirs.row(k).transpose());
      worst = std::max(worst, hybrid_delta_form(model, theta_star, d_inv_sqrt,
                                                curvature, el_star, theta));
      if (std::isinf(worst)) break;
    }
    table.delta[j] = worst;
  }

  // Score-increment modulus, class by class.
  switch (model.cls) {
    case ModelClass::Glm:
      break;  // the centered score is linear in theta: no increment at all
    case ModelClass::Lad: {
      VectorXd reach(model.n);
      VectorXd w_star = model.design.rows * theta_star;
      for (int i = 0; i < model.n; ++i) {
        reach[i] = (v_inv_sqrt * model.design.row(i)).norm();
      }
      for (int j = 0; j < nr; ++j) {
        double worst = 0.0;
        for (int i = 0; i < model.n; ++i) {
          const ScalarLaw& law = model.law(i);
          double h = table.r[j] * reach[i];
          double c = law.cdf(w_star[i]);
          double up = law.cdf(w_star[i] + h) - c;
          double down = c - law.cdf(w_star[i] - h);
          worst = std::max(worst, std::max(up, down));
        }
        table.rho[j] = 4.0 * worst;
      }
      break;
    }
    case ModelClass::Iid: {
      const ScalarLaw& law = model.law(0);
      double v = law.variance();
      CentralMoments cm;
      if (in_family(model)) {
        cm.c2 = v;
        cm.c3 = 0.0;
        cm.c4 = 3.0 * v * v;
      } else {
        Rng rng(options.seed, 0, kTagCalibration);
        cm = law_central_moments(law, options.mc_samples, rng);
        cm.c2 = v;  // the second moment is exact through the law interface
      }
      double mu_star = theta_star[0];
      double s_star = theta_star[1];
      double e_star = std::exp(-2.0 * s_star);
      for (int j = 0; j < nr; ++j) {
        double worst = 0.0;
        for (int k = 0; k < dirs.rows(); ++k) {
          VectorXd diff =
              table.r[j] * (v_inv_sqrt * dirs.row(k).transpose());
          double dmu = diff[0];
          double ds = diff[1];
          if (std::fabs(ds) > 150.0) {
            worst = kInf;
            break;
          }
          double e_probe = std::exp(-2.0 * (s_star + ds));
          double a1 = e_probe - e_star;
          double b1 = -2.0 * dmu * e_probe;
          double var_a = a1 * a1 * cm.c2;
          double cov_ab = a1 * (a1 * cm.c3 + b1 * cm.c2);
          double var_b = a1 * a1 * (cm.c4 - cm.c2 * cm.c2) +
                         b1 * b1 * cm.c2 + 2.0 * a1 * b1 * cm.c3;
          MatrixXd cov(2, 2);
          cov << var_a, cov_ab, cov_ab, var_b;
          MatrixXd scaled =
              v_inv_sqrt * (model.n * cov) * v_inv_sqrt;
          double lam = sym_op_norm(scaled);
          worst = std::max(worst, std::sqrt(std::max(lam, 0.0)) / table.r[j]);
          (void)mu_star;
        }
        table.rho[j] = worst;
      }
      break;
    }
  }

  // Moduli are suprema over growing balls: enforce monotonicity and flag the
  // first radius where either modulus leaves the admissible range.
  double run_d = 0.0, run_r = 0.0;
  for (int j = 0; j < nr; ++j) {
    run_d = std::max(run_d, table.delta[j]);
    run_r = std::max(run_r, table.rho[j]);
    table.delta[j] = run_d;
    table.rho[j] = run_r;
    if ((run_d > 0.5 || run_r > 0.5) && !table.conditions_violated) {
      table.conditions_violated = true;
      table.violation_r = table.r[j];
    }
  }
  return table;
}

double GlobalLowerTable::b_at(double radius) const {
  if (r.empty()) return 0.0;
  if (radius <= r.front()) return b.front();
  if (radius >= r.back()) return r.back() * b.back() / radius;
  double x0 = r.front(), y0 = r.front() * b.front();
  for (size_t i = 1; i < r.size(); ++i) {
    double y1 = r[i] * b[i];
    if (radius <= r[i]) {
      if (!std::isfinite(y1)) return y1;
      double t = (radius - x0) / (r[i] - x0);
      return (y0 + t * (y1 - y0)) / radius;
    }
    x0 = r[i];
    y0 = y1;
  }
  return b.back();
}

GlobalLowerTable global_identifiability(const Model& model,
                                        const VectorXd& theta_star,
                                        const Spd& score_cov, double r_max,
                                        int directions) {
  GlobalLowerTable table;
  double base = std::sqrt(static_cast<double>(model.p));
  double top = std::max(r_max, 256.0 * base);
  for (int j = 0;; ++j) {
    double rj = base * std::pow(2.0, (j - 4) / 2.0);
    table.r.push_back(rj);
    if (rj >= top) break;
  }
  MatrixXd dirs = sphere_directions(model.p, directions);
  MatrixXd v_inv_sqrt = score_cov.inv_sqrt();
  double el_star = mean_loglik(model, theta_star);
  for (double rj : table.r) {
    double worst = kInf;
    for (int k = 0; k < dirs.rows(); ++k) {
      VectorXd theta = theta_star + rj * (v_inv_sqrt * dirs.row(k).transpose());
      double el = mean_loglik(model, theta);
      double dip = el_star - el;  // -E L(theta, theta*) >= 0
      worst = std::min(worst, 2.0 * dip / (rj * rj));
    }
    table.b.push_back(worst);
  }
  for (size_t i = 1; i < table.r.size(); ++i) {
    double prev = table.r[i - 1] * table.b[i - 1];
    double cur = table.r[i] * table.b[i];
    if (cur < prev * (1.0 - 1e-9)) {
      table.r_b_monotone = false;
      break;
    }
  }
  return table;
}

double glm_effective_n(const Design& design, const VectorXd& s,
                       const Spd& score_cov) {
  if (s.size() != design.n()) {
    throw std::invalid_argument("glm_effective_n: scale length mismatch");
  }
  MatrixXd v_inv_sqrt = score_cov.inv_sqrt();
  double worst = 0.0;
  for (int i = 0; i < design.n(); ++i) {
    worst = std::max(worst, s[i] * (v_inv_sqrt * design.row(i)).norm());
  }
  if (worst <= 0.0) {
    throw std::invalid_argument("glm_effective_n: degenerate scales");
  }
  return 1.0 / (worst * worst);
}

ExpMomentProbe probe_exp_moment(const Model& model, const Spd& score_cov,
                                const VectorXd& theta, const VectorXd& gamma,
                                const std::vector<double>& lambda_grid,
                                int sample_count, std::uint64_t seed) {
  double vnorm = std::sqrt(score_cov.quad(gamma));
  if (!(vnorm > 0.0)) {
    throw std::invalid_argument("probe_exp_moment: ||V gamma|| is zero");
  }
  std::uint64_t master = stream_seed(seed, 0, kTagProbeDraws);
  MatrixXd draws = centered_score_draws(model, theta, sample_count, master);
  VectorXd t = draws * gamma / vnorm;
  return probe_from_samples(t, lambda_grid);
}

ExpMomentProbe probe_exp_moment_increment(
    const Model& model, const Spd& score_cov, const VectorXd& theta,
    const VectorXd& theta_star, const VectorXd& gamma, double rho_scale,
    const std::vector<double>& lambda_grid, int sample_count,
    std::uint64_t seed) {
  double vnorm = std::sqrt(score_cov.quad(gamma));
  if (!(vnorm > 0.0)) {
    throw std::invalid_argument("probe_exp_moment: ||V gamma|| is zero");
  }
  std::uint64_t master = stream_seed(seed, 0, kTagProbeDraws);
  VectorXd mg = mean_grad(model, theta);
  VectorXd mg_star = mean_grad(model, theta_star);
  VectorXd t(sample_count);
  for (int s = 0; s < sample_count; ++s) {
    VectorXd y = sample_data(model, master, static_cast<std::uint64_t>(s));
    VectorXd inc = (loglik_grad(model, y, theta) - mg) -
                   (loglik_grad(model, y, theta_star) - mg_star);
    t[s] = gamma.dot(inc);
  }
  // A linear score has no increment at all; cancellation noise far below the
  // score scale counts as zero.
  if (t.cwiseAbs().maxCoeff() <= 1e-9 * vnorm) {
    ExpMomentProbe probe;
    probe.lambdas = lambda_grid;
    return probe;
  }
  if (!(rho_scale > 0.0)) {
    throw std::invalid_argument(
        "probe_exp_moment: zero increment scale for a nonzero increment");
  }
  t /= rho_scale * vnorm;
  return probe_from_samples(t, lambda_grid);
}

ScoreRange score_range(const Model& model, const VectorXd& theta_star,
                       const Spd& score_cov, std::uint64_t seed) {
  ScoreRange out;
  switch (model.cls) {
    case ModelClass::Glm:
      out.effective_n = glm_effective_n(model.design, model.scale, score_cov);
      break;
    case ModelClass::Lad:
      out.effective_n = glm_effective_n(
          model.design, VectorXd::Constant(model.n, 0.5), score_cov);
      break;
    case ModelClass::Iid:
      out.effective_n = model.n;
      break;
  }
  double root_n = std::sqrt(out.effective_n);

  bool bounded_score =
      model.cls == ModelClass::Lad ||
      (model.cls == ModelClass::Glm && model.kind == GlmKind::Logistic);
  bool exact_gaussian =
      model.cls == ModelClass::Glm && model.kind == GlmKind::Gaussian;

  auto worst_over = [&](const MatrixXd& draws, const MatrixXd& dirs,
                        double g) {
    double worst = 0.0;
    for (int k = 0; k < dirs.rows(); ++k) {
      VectorXd gamma = dirs.row(k).transpose();
      VectorXd t = draws * gamma / std::sqrt(score_cov.quad(gamma));
      for (double frac : {0.25, 0.5, 0.75, 1.0}) {
        for (double sign : {-1.0, 1.0}) {
          double lam = sign * frac * g;
          double ratio = 2.0 * log_mgf(t, lam) / (lam * lam);
          if (std::isfinite(ratio)) worst = std::max(worst, ratio);
        }
      }
    }
    return worst;
  };

  if (bounded_score || exact_gaussian) {
    out.g1 = exact_gaussian ? 1.0 : 0.5;
    out.g = out.g1 * root_n;
    MatrixXd draws = centered_score_draws(
        model, theta_star, 5000, stream_seed(seed, 1, kTagCalibration));
    out.nu2_probe =
        worst_over(draws, sphere_directions(model.p, 4), out.g);
    return out;
  }

  // Unbounded scores: shrink g1 until the empirical exponential moment is
  // compatible with a unit sub-Gaussian constant (documented cap 1.25).
  out.probed = true;
  MatrixXd draws = centered_score_draws(
      model, theta_star, 20000, stream_seed(seed, 0, kTagCalibration));
  MatrixXd dirs = sphere_directions(model.p, 8);
  for (double g1 : {1.0, 0.75, 0.5, 0.35, 0.25}) {
    out.g1 = g1;
    out.g = g1 * root_n;
    out.nu2_probe = worst_over(draws, dirs, out.g);
    if (out.nu2_probe <= 1.25) break;
  }
  return out;
}

LocalGeometry analyze_geometry(const Model& model,
                               const GeometryOptions& options) {
  LocalGeometry geo;
  geo.target_info = compute_target(model);
  geo.theta_star = geo.target_info.theta_star;
  FisherResult fisher = fisher_matrices(model, geo.theta_star);
  geo.curvature = fisher.curvature;
  geo.score_cov = fisher.score_cov;
  geo.score_cov_se = fisher.score_cov_se;
  geo.a = identifiability_constant(geo.curvature, geo.score_cov);
  geo.range = score_range(model, geo.theta_star, geo.score_cov,
                          options.moduli.seed);
  geo.nu = 1.0;
  geo.g = geo.range.g;
  geo.effective_n = geo.range.effective_n;
  geo.moduli = local_moduli(model, geo.theta_star, geo.curvature,
                            geo.score_cov, options.moduli);
  geo.lower = global_identifiability(model, geo.theta_star, geo.score_cov,
                                     options.lower_r_max);
  return geo;
}

}  // namespace fsmle
