#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fsmle/model.hpp"

using namespace fsmle;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(static_cast<long>(v.size()));
  long i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

// Central finite differences of the total log-likelihood.
VectorXd fd_grad(const Model& m, const VectorXd& y, const VectorXd& theta,
                 double h) {
  VectorXd g(theta.size());
  for (int j = 0; j < theta.size(); ++j) {
    VectorXd up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    g[j] = (loglik(m, y, up) - loglik(m, y, dn)) / (2.0 * h);
  }
  return g;
}

MatrixXd fd_hess(const Model& m, const VectorXd& y, const VectorXd& theta,
                 double h) {
  MatrixXd hess(theta.size(), theta.size());
  for (int j = 0; j < theta.size(); ++j) {
    VectorXd up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    hess.col(j) = (loglik_grad(m, y, up) - loglik_grad(m, y, dn)) / (2.0 * h);
  }
  return hess;
}

}  // namespace

TEST_CASE("cumulant closed forms") {
  Cumulant c = glm_cumulant(GlmKind::Logistic, 0.0);
  CHECK(c.value == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  CHECK(c.d1 == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.d2 == doctest::Approx(0.25).epsilon(1e-14));

  c = glm_cumulant(GlmKind::Logistic, 2.0);
  CHECK(c.value == doctest::Approx(2.126928011042973).epsilon(1e-13));
  CHECK(c.d1 == doctest::Approx(0.8807970779778823).epsilon(1e-13));
  CHECK(c.d2 == doctest::Approx(0.10499358540350652).epsilon(1e-12));

  c = glm_cumulant(GlmKind::Poisson, 1.0);
  CHECK(c.value == doctest::Approx(2.718281828459045).epsilon(1e-14));
  CHECK(c.d2 == doctest::Approx(2.718281828459045).epsilon(1e-14));

  c = glm_cumulant(GlmKind::Gaussian, 3.0);
  CHECK(c.value == doctest::Approx(4.5));
  CHECK(c.d1 == doctest::Approx(3.0));
  CHECK(c.d2 == doctest::Approx(1.0));

  c = glm_cumulant(GlmKind::Exponential, 2.0);
  CHECK(c.value == doctest::Approx(-0.6931471805599453).epsilon(1e-14));
  CHECK(c.d1 == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(c.d2 == doctest::Approx(0.25).epsilon(1e-14));

  CHECK_THROWS_AS(glm_cumulant(GlmKind::Exponential, -1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(glm_cumulant(GlmKind::Exponential, 0.0),
                  std::invalid_argument);
}

TEST_CASE("cumulant derivatives match finite differences, curvature positive") {
  Rng rng(11);
  for (GlmKind kind : {GlmKind::Logistic, GlmKind::Poisson,
                       GlmKind::Exponential, GlmKind::Gaussian}) {
    for (int trial = 0; trial < 100; ++trial) {
      double w = kind == GlmKind::Exponential ? 0.05 + 3.0 * rng.uniform()
                                              : 4.0 * (rng.uniform() - 0.5);
      double h = 1e-6 * (1.0 + std::fabs(w));
      Cumulant c = glm_cumulant(kind, w);
      double d1 = (glm_cumulant(kind, w + h).value -
                   glm_cumulant(kind, w - h).value) /
                  (2.0 * h);
      double d2 = (glm_cumulant(kind, w + h).d1 -
                   glm_cumulant(kind, w - h).d1) /
                  (2.0 * h);
      CHECK(c.d1 == doctest::Approx(d1).epsilon(1e-5));
      CHECK(c.d2 == doctest::Approx(d2).epsilon(1e-4));
      CHECK(c.d2 > 0.0);
    }
  }
}

TEST_CASE("orthonormal block design and glm curvature spot values") {
  Design d = make_orthonormal_design(100, 2);
  CHECK(d.rows.col(0).sum() == doctest::Approx(50.0));
  Model gauss =
      build_glm(d, GlmKind::Gaussian, TruthSpec::in_family(vec({1.0, -1.0})));
  MatrixXd h = mean_hess(gauss, vec({0.3, 0.7}));
  CHECK((h + 50.0 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);

  Model logit =
      build_glm(d, GlmKind::Logistic, TruthSpec::in_family(vec({0.0, 0.0})));
  MatrixXd hl = mean_hess(logit, vec({0.0, 0.0}));
  CHECK((hl + 12.5 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rank deficient design is rejected") {
  MatrixXd m(4, 2);
  m << 1, 2, 2, 4, 3, 6, -1, -2;
  CHECK_THROWS_AS(Design{m}, std::invalid_argument);
}

TEST_CASE("glm hessian is negative semidefinite everywhere") {
  Design d = make_normal_design(40, 3, 5);
  Model m = build_glm(d, GlmKind::Logistic,
                      TruthSpec::in_family(vec({0.5, -0.25, 1.0})));
  VectorXd y = sample_data(m, 99, 0);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd theta(3);
    for (int j = 0; j < 3; ++j) theta[j] = 3.0 * (rng.uniform() - 0.5);
    MatrixXd h = loglik_hess(m, y, theta);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    CHECK(es.eigenvalues().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gradient and hessian match finite differences") {
  Rng rng(21);

  Design d = make_normal_design(25, 2, 17);
  Model logit = build_glm(d, GlmKind::Logistic,
                          TruthSpec::in_family(vec({0.4, -0.8})));
  Model pois = build_glm(d, GlmKind::Poisson,
                         TruthSpec::in_family(vec({0.2, 0.1})));
  Model iid = build_iid_gaussian(30, TruthSpec::in_family(vec({1.0, 0.3})));

  for (const Model* m : {&logit, &pois, &iid}) {
    VectorXd y = sample_data(*m, 7, 3);
    for (int trial = 0; trial < 30; ++trial) {
      VectorXd theta(m->p);
      for (int j = 0; j < m->p; ++j) theta[j] = rng.uniform() - 0.5;
      VectorXd g = loglik_grad(*m, y, theta);
      VectorXd gfd = fd_grad(*m, y, theta, 1e-6);
      CHECK((g - gfd).norm() < 1e-4 * (1.0 + g.norm()));
      MatrixXd h = loglik_hess(*m, y, theta);
      MatrixXd hfd = fd_hess(*m, y, theta, 1e-6);
      CHECK((h - hfd).cwiseAbs().maxCoeff() <
            1e-4 * (1.0 + h.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("mean log-likelihood agrees with monte carlo") {
  Design d = make_normal_design(15, 2, 31);

  Model lad = build_lad(
      d, TruthSpec::custom_mean(VectorXd::Constant(15, 0.5),
                                make_student_t_law(0.0, 1.0, 4.0)));
  Model logit = build_glm(
      d, GlmKind::Logistic,
      TruthSpec::custom_mean(VectorXd::Constant(15, 0.35), nullptr));
  Model iid = build_iid_gaussian(
      10, TruthSpec::custom_mean(vec({0.7}), make_laplace_law(0.0, 1.0)));

  Rng rng(55);
  for (const Model* m : {&lad, &logit, &iid}) {
    VectorXd theta(m->p);
    for (int j = 0; j < m->p; ++j) theta[j] = 0.8 * (rng.uniform() - 0.5);
    double exact = mean_loglik(*m, theta);
    int reps = 20000;
    double acc = 0.0, acc2 = 0.0;
    for (int k = 0; k < reps; ++k) {
      double v = loglik(*m, sample_data(*m, 1234, static_cast<std::uint64_t>(k)),
                        theta);
      acc += v;
      acc2 += v * v;
    }
    double mc = acc / reps;
    double se = std::sqrt((acc2 / reps - mc * mc) / reps);
    CHECK(std::fabs(mc - exact) < 4.0 * se + 1e-9);
  }
}

TEST_CASE("mean gradient and hessian differentiate the mean log-likelihood") {
  Design d = make_normal_design(12, 2, 41);
  Model lad = build_lad(d, TruthSpec::in_family(vec({0.5, -0.5})));
  Model logit = build_glm(d, GlmKind::Logistic,
                          TruthSpec::in_family(vec({0.5, -0.5})));
  Model iid = build_iid_gaussian(
      10, TruthSpec::custom_mean(vec({0.3}), make_student_t_law(0.0, 1.0, 5.0)));
  Rng rng(71);
  for (const Model* m : {&lad, &logit, &iid}) {
    for (int trial = 0; trial < 20; ++trial) {
      VectorXd theta(m->p);
      for (int j = 0; j < m->p; ++j) theta[j] = rng.uniform() - 0.5;
      double h = 1e-6;
      VectorXd g = mean_grad(*m, theta);
      MatrixXd hess = mean_hess(*m, theta);
      for (int j = 0; j < m->p; ++j) {
        VectorXd up = theta, dn = theta;
        up[j] += h;
        dn[j] -= h;
        double gfd = (mean_loglik(*m, up) - mean_loglik(*m, dn)) / (2.0 * h);
        CHECK(g[j] == doctest::Approx(gfd).epsilon(5e-4));
        VectorXd hcol = (mean_grad(*m, up) - mean_grad(*m, dn)) / (2.0 * h);
        CHECK((hess.col(j) - hcol).norm() <
              5e-4 * (1.0 + hess.cwiseAbs().maxCoeff()));
      }
    }
  }
}

TEST_CASE("glm centered score does not depend on theta") {
  Design d = make_normal_design(20, 2, 13);
  Model m = build_glm(d, GlmKind::Poisson,
                      TruthSpec::in_family(vec({0.3, -0.2})));
  VectorXd y = sample_data(m, 5, 0);
  VectorXd z1 = centered_grad(m, y, vec({0.0, 0.0}));
  VectorXd z2 = centered_grad(m, y, vec({0.9, -0.7}));
  CHECK((z1 - z2).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + z1.norm()));
}

TEST_CASE("median regression loss is concave along segments") {
  Design d = make_normal_design(10, 2, 19);
  Model m = build_lad(d, TruthSpec::in_family(vec({1.0, 2.0})));
  VectorXd y = sample_data(m, 6, 0);
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd a(2), b(2);
    for (int j = 0; j < 2; ++j) {
      a[j] = 4.0 * (rng.uniform() - 0.5);
      b[j] = 4.0 * (rng.uniform() - 0.5);
    }
    double mid = loglik(m, y, VectorXd(0.5 * (a + b)));
    CHECK(mid >= 0.5 * (loglik(m, y, a) + loglik(m, y, b)) - 1e-12);
  }
}

TEST_CASE("sampling is reproducible and matches the law of large numbers") {
  Design d = make_orthonormal_design(100000, 2);
  Model m = build_glm(d, GlmKind::Gaussian,
                      TruthSpec::in_family(vec({1.0, -2.0})));
  VectorXd y1 = sample_data(m, 42, 7);
  VectorXd y2 = sample_data(m, 42, 7);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
  VectorXd y3 = sample_data(m, 42, 8);
  CHECK((y1 - y3).cwiseAbs().maxCoeff() > 0.0);

  VectorXd resid = y1 - d.rows * m.truth.theta_true;
  CHECK(std::fabs(resid.mean()) < 3.0 / std::sqrt(100000.0));
}

TEST_CASE("contaminated truth hits the contaminant at the right rate") {
  TruthSpec base = TruthSpec::in_family(vec({0.0, 0.0}));
  TruthSpec truth =
      TruthSpec::contaminated(base, 0.1, make_normal_law(50.0, 0.1));
  Model m = build_iid_gaussian(10000, truth);
  VectorXd y = sample_data(m, 2024, 0);
  int count = 0;
  for (int i = 0; i < y.size(); ++i) {
    if (y[i] > 25.0) ++count;
  }
  // 99% binomial band around 1000 of 10000 at fraction 0.1.
  CHECK(count >= 923);
  CHECK(count <= 1077);
}

TEST_CASE("median regression density fallback uses a kernel estimate") {
  LawPtr hidden = make_sampler_only_law(make_normal_law(0.0, 1.0));
  Design d = make_orthonormal_design(8, 2);
  Model m = build_lad(d, TruthSpec::custom_mean(VectorXd::Zero(8), hidden));
  CHECK(m.law(0).has_density());
  CHECK(m.law(0).pdf(0.0) == doctest::Approx(0.3989422804).epsilon(0.02));
  CHECK(m.law(0).cdf(0.0) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("scalar law moments and folded means") {
  CHECK(make_laplace_law(0.0, 1.0)->variance() == doctest::Approx(2.0));
  CHECK(make_laplace_law(0.0, 2.0)->mean_abs_dev(0.0) == doctest::Approx(2.0));
  CHECK(make_normal_law(0.0, 1.0)->mean_abs_dev(0.0) ==
        doctest::Approx(0.7978845608028654).epsilon(1e-12));
  CHECK(make_student_t_law(0.0, 1.0, 3.0)->mean_abs_dev(0.0) ==
        doctest::Approx(1.1026577908435842).epsilon(1e-9));
  CHECK(make_student_t_law(0.0, 1.0, 3.0)->variance() == doctest::Approx(3.0));

  LawPtr bern = make_bernoulli_law(0.3);
  CHECK(bern->mean_abs_dev(0.2) == doctest::Approx(0.38).epsilon(1e-12));

  LawPtr negexp = make_neg_exponential_law(2.0);
  CHECK(negexp->mean() == doctest::Approx(-0.5));
  CHECK(negexp->variance() == doctest::Approx(0.25));
  CHECK(negexp->pdf(-1.0) == doctest::Approx(0.2706705664732254).epsilon(1e-12));
  CHECK(negexp->cdf(0.0) == doctest::Approx(1.0));
  CHECK(negexp->mean_abs_dev(-0.5) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-9));

  LawPtr mix = make_mixture_law(make_normal_law(0.0, 1.0), 0.1,
                                make_normal_law(10.0, 2.0));
  CHECK(mix->mean() == doctest::Approx(1.0));
  CHECK(mix->variance() == doctest::Approx(10.3).epsilon(1e-12));

  // Folded-mean consistency against numerical integration for the mixture.
  double t = 1.7;
  double direct = mix->mean_abs_dev(t);
  double step = 1e-3, acc = 0.0;
  for (double x = -12.0; x < 22.0; x += step) {
    double mid = x + 0.5 * step;
    acc += std::fabs(mid - t) * mix->pdf(mid) * step;
  }
  CHECK(direct == doctest::Approx(acc).epsilon(1e-4));
}

TEST_CASE("truth resolution validates inputs") {
  Design d = make_orthonormal_design(10, 2);
  CHECK_THROWS_AS(
      build_glm(d, GlmKind::Logistic,
                TruthSpec::custom_mean(VectorXd::Constant(3, 0.5), nullptr)),
      std::invalid_argument);
  CHECK_THROWS_AS(
      build_glm(d, GlmKind::Exponential,
                TruthSpec::in_family(vec({1.0, -1.0}))),
      std::invalid_argument);
  CHECK_THROWS_AS(TruthSpec::contaminated(TruthSpec::in_family(vec({0.0, 0.0})),
                                          1.5, make_normal_law(0.0, 1.0)),
                  std::invalid_argument);
}
