#include "fsmle/model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fsmle {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;
constexpr std::uint64_t kTagData = 1;
constexpr std::uint64_t kTagKernel = 2;

double sigmoid(double w) {
  if (w >= 0.0) return 1.0 / (1.0 + std::exp(-w));
  double e = std::exp(w);
  return e / (1.0 + e);
}

double softplus(double w) {
  if (w > 35.0) return w;
  if (w < -35.0) return std::exp(w);
  return std::log1p(std::exp(w));
}

LawPtr family_law(GlmKind kind, double mean) {
  switch (kind) {
    case GlmKind::Logistic:
      return make_bernoulli_law(mean);
    case GlmKind::Poisson:
      return make_poisson_law(mean);
    case GlmKind::Exponential:
      if (mean >= 0.0) {
        throw std::invalid_argument(
            "exponential family: observation mean must be negative");
      }
      return make_neg_exponential_law(-1.0 / mean);
    case GlmKind::Gaussian:
      return make_normal_law(mean, 1.0);
  }
  throw std::logic_error("unknown glm kind");
}

// Resolve a truth spec to the absolute law of each observation.  locations
// gives the in-family natural location per observation (linear predictor for
// regression models); law_at_location builds the family's observation law
// there, law_at_mean builds it for a custom-mean spec naming no residual.
std::vector<LawPtr> resolve_truth(
    const TruthSpec& truth, int n, const VectorXd& locations,
    const std::function<LawPtr(double)>& law_at_location,
    const std::function<LawPtr(double)>& law_at_mean) {
  std::vector<LawPtr> laws;
  switch (truth.kind) {
    case TruthSpec::Kind::InFamily: {
      laws.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) laws.push_back(law_at_location(locations[i]));
      break;
    }
    case TruthSpec::Kind::CustomMean: {
      if (truth.means.size() != n) {
        throw std::invalid_argument("custom-mean truth: need one mean per observation");
      }
      laws.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        if (truth.residual) {
          laws.push_back(make_shifted_law(
              truth.residual, truth.means[i] - truth.residual->mean()));
        } else {
          laws.push_back(law_at_mean(truth.means[i]));
        }
      }
      break;
    }
    case TruthSpec::Kind::Contaminated: {
      auto base =
          resolve_truth(*truth.base, n, locations, law_at_location, law_at_mean);
      laws.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        laws.push_back(make_mixture_law(base[static_cast<size_t>(i)],
                                        truth.fraction, truth.contaminant));
      }
      break;
    }
  }
  return laws;
}

VectorXd in_family_locations(const Design& design, const TruthSpec& truth) {
  const TruthSpec* t = &truth;
  while (t->kind == TruthSpec::Kind::Contaminated) t = t->base.get();
  if (t->kind == TruthSpec::Kind::InFamily) {
    if (t->theta_true.size() != design.p()) {
      throw std::invalid_argument("truth: theta_true has wrong dimension");
    }
    return design.rows * t->theta_true;
  }
  return VectorXd::Zero(design.n());
}

}  // namespace

std::string to_string(ModelClass c) {
  switch (c) {
    case ModelClass::Iid: return "iid";
    case ModelClass::Glm: return "glm";
    case ModelClass::Lad: return "lad";
  }
  return "?";
}

std::string to_string(GlmKind k) {
  switch (k) {
    case GlmKind::Logistic: return "logistic";
    case GlmKind::Poisson: return "poisson";
    case GlmKind::Exponential: return "exponential";
    case GlmKind::Gaussian: return "gaussian";
  }
  return "?";
}

Cumulant glm_cumulant(GlmKind kind, double w) {
  switch (kind) {
    case GlmKind::Logistic: {
      double s = sigmoid(w);
      double e = std::exp(-std::fabs(w));
      double d2 = e / ((1.0 + e) * (1.0 + e));
      return {softplus(w), s, d2};
    }
    case GlmKind::Poisson: {
      double e = std::exp(w);
      return {e, e, e};
    }
    case GlmKind::Exponential: {
      if (w <= 0.0) {
        throw std::invalid_argument("exponential cumulant: need w > 0");
      }
      return {-std::log(w), -1.0 / w, 1.0 / (w * w)};
    }
    case GlmKind::Gaussian:
      return {0.5 * w * w, w, 1.0};
  }
  throw std::logic_error("unknown glm kind");
}

TruthSpec TruthSpec::in_family(VectorXd theta) {
  TruthSpec t;
  t.kind = Kind::InFamily;
  t.theta_true = std::move(theta);
  return t;
}

TruthSpec TruthSpec::custom_mean(VectorXd means, LawPtr residual) {
  TruthSpec t;
  t.kind = Kind::CustomMean;
  t.means = std::move(means);
  t.residual = std::move(residual);
  return t;
}

TruthSpec TruthSpec::contaminated(TruthSpec base, double fraction,
                                  LawPtr contaminant) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("contaminated truth: fraction not in [0,1]");
  }
  if (!contaminant) {
    throw std::invalid_argument("contaminated truth: missing contaminant law");
  }
  TruthSpec t;
  t.kind = Kind::Contaminated;
  t.base = std::make_shared<TruthSpec>(std::move(base));
  t.fraction = fraction;
  t.contaminant = std::move(contaminant);
  return t;
}

std::string TruthSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::InFamily: {
      os << "in_family(theta=[";
      for (int i = 0; i < theta_true.size(); ++i) {
        os << (i ? "," : "") << theta_true[i];
      }
      os << "])";
      break;
    }
    case Kind::CustomMean:
      os << "custom_mean(n=" << means.size() << ",residual="
         << (residual ? residual->describe() : "family") << ")";
      break;
    case Kind::Contaminated:
      os << "contaminated(base=" << base->describe() << ",fraction=" << fraction
         << ",contaminant=" << contaminant->describe() << ")";
      break;
  }
  return os.str();
}

Model build_glm(const Design& design, GlmKind kind, const TruthSpec& truth,
                VectorXd scale) {
  Model m;
  m.cls = ModelClass::Glm;
  m.design = design;
  m.n = design.n();
  m.p = design.p();
  m.kind = kind;
  m.truth = truth;

  VectorXd loc = in_family_locations(design, truth);
  if (truth.kind == TruthSpec::Kind::InFamily ||
      (truth.kind == TruthSpec::Kind::Contaminated &&
       truth.base->kind == TruthSpec::Kind::InFamily)) {
    // The linear predictor must be inside the cumulant domain.
    for (int i = 0; i < m.n; ++i) glm_cumulant(kind, loc[i]);
  }
  // In-family locations are natural parameters; the observation mean there
  // is the cumulant derivative.
  auto at_location = [kind](double w) {
    return family_law(kind, glm_cumulant(kind, w).d1);
  };
  auto at_mean = [kind](double mean) { return family_law(kind, mean); };
  m.laws = resolve_truth(truth, m.n, loc, at_location, at_mean);

  if (scale.size() == 0) {
    m.scale = truth_sds(m);
  } else {
    if (scale.size() != m.n) {
      throw std::invalid_argument("glm: scale vector needs one entry per observation");
    }
    if (scale.minCoeff() <= 0.0) {
      throw std::invalid_argument("glm: scales must be positive");
    }
    m.scale = std::move(scale);
  }
  return m;
}

Model build_lad(const Design& design, const TruthSpec& truth) {
  Model m;
  m.cls = ModelClass::Lad;
  m.design = design;
  m.n = design.n();
  m.p = design.p();
  m.truth = truth;

  VectorXd loc = in_family_locations(design, truth);
  // Median regression centers the family noise at the linear predictor, so
  // location and mean coincide: unit Laplace either way.
  auto noise = [](double center) { return make_laplace_law(center, 1.0); };
  m.laws = resolve_truth(truth, m.n, loc, noise, noise);

  // Median-regression geometry needs a residual density; estimate one when
  // the law only exposes a sampler.
  for (size_t i = 0; i < m.laws.size(); ++i) {
    if (!m.laws[i]->has_density()) {
      Rng rng(0x6b65726eULL, i, kTagKernel);
      m.laws[i] = kernel_law_from_sampler(*m.laws[i], 100000, rng);
    }
  }
  return m;
}

Model build_iid_gaussian(int n, const TruthSpec& truth) {
  if (n < 2) throw std::invalid_argument("iid model: need n >= 2");
  Model m;
  m.cls = ModelClass::Iid;
  m.n = n;
  m.p = 2;
  m.truth = truth;

  switch (truth.kind) {
    case TruthSpec::Kind::InFamily: {
      if (truth.theta_true.size() != 2) {
        throw std::invalid_argument("iid gaussian: theta is (mu, log sigma)");
      }
      m.laws = {make_normal_law(truth.theta_true[0],
                                std::exp(truth.theta_true[1]))};
      break;
    }
    case TruthSpec::Kind::CustomMean: {
      if (truth.means.size() != 1 || !truth.residual) {
        throw std::invalid_argument(
            "iid gaussian: custom truth is one mean plus a residual law");
      }
      m.laws = {make_shifted_law(truth.residual,
                                 truth.means[0] - truth.residual->mean())};
      break;
    }
    case TruthSpec::Kind::Contaminated: {
      Model base = build_iid_gaussian(n, *truth.base);
      m.laws = {make_mixture_law(base.laws[0], truth.fraction, truth.contaminant)};
      break;
    }
  }
  return m;
}

VectorXd sample_data(const Model& model, std::uint64_t master_seed,
                     std::uint64_t k) {
  Rng rng(master_seed, k, kTagData);
  VectorXd y(model.n);
  for (int i = 0; i < model.n; ++i) y[i] = model.law(i).sample(rng);
  return y;
}

VectorXd truth_means(const Model& model) {
  VectorXd f(model.n);
  for (int i = 0; i < model.n; ++i) f[i] = model.law(i).mean();
  return f;
}

VectorXd truth_sds(const Model& model) {
  VectorXd s(model.n);
  for (int i = 0; i < model.n; ++i) s[i] = model.law(i).sd();
  return s;
}

bool theta_feasible(const Model& model, const VectorXd& theta) {
  if (theta.size() != model.p) return false;
  if (!theta.allFinite()) return false;
  if (model.cls == ModelClass::Glm && model.kind == GlmKind::Exponential) {
    VectorXd w = model.design.rows * theta;
    return w.minCoeff() > 0.0;
  }
  return true;
}

double loglik(const Model& model, const VectorXd& y, const VectorXd& theta) {
  switch (model.cls) {
    case ModelClass::Glm: {
      if (!theta_feasible(model, theta)) {
        return -std::numeric_limits<double>::infinity();
      }
      VectorXd w = model.design.rows * theta;
      double acc = 0.0;
      for (int i = 0; i < model.n; ++i) {
        acc += y[i] * w[i] - glm_cumulant(model.kind, w[i]).value;
      }
      return acc;
    }
    case ModelClass::Lad: {
      VectorXd w = model.design.rows * theta;
      return -0.5 * (y - w).cwiseAbs().sum();
    }
    case ModelClass::Iid: {
      double mu = theta[0], s = theta[1];
      double inv2 = std::exp(-2.0 * s);
      double acc = 0.0;
      for (int i = 0; i < model.n; ++i) {
        double d = y[i] - mu;
        acc += -kHalfLog2Pi - s - 0.5 * d * d * inv2;
      }
      return acc;
    }
  }
  throw std::logic_error("unknown model class");
}

VectorXd loglik_grad(const Model& model, const VectorXd& y,
                     const VectorXd& theta) {
  switch (model.cls) {
    case ModelClass::Glm: {
      VectorXd w = model.design.rows * theta;
      VectorXd r(model.n);
      for (int i = 0; i < model.n; ++i) {
        r[i] = y[i] - glm_cumulant(model.kind, w[i]).d1;
      }
      return model.design.rows.transpose() * r;
    }
    case ModelClass::Lad: {
      VectorXd w = model.design.rows * theta;
      VectorXd r(model.n);
      // Convention at ties: indicator of {y - w <= 0}.
      for (int i = 0; i < model.n; ++i) r[i] = y[i] <= w[i] ? -0.5 : 0.5;
      return model.design.rows.transpose() * r;
    }
    case ModelClass::Iid: {
      double mu = theta[0], s = theta[1];
      double inv2 = std::exp(-2.0 * s);
      VectorXd g = VectorXd::Zero(2);
      for (int i = 0; i < model.n; ++i) {
        double d = y[i] - mu;
        g[0] += d * inv2;
        g[1] += -1.0 + d * d * inv2;
      }
      return g;
    }
  }
  throw std::logic_error("unknown model class");
}

MatrixXd loglik_hess(const Model& model, const VectorXd& y,
                     const VectorXd& theta) {
  switch (model.cls) {
    case ModelClass::Glm: {
      VectorXd w = model.design.rows * theta;
      VectorXd d2(model.n);
      for (int i = 0; i < model.n; ++i) {
        d2[i] = glm_cumulant(model.kind, w[i]).d2;
      }
      return -(model.design.rows.transpose() * d2.asDiagonal() *
               model.design.rows);
    }
    case ModelClass::Lad:
      throw std::logic_error("median regression: no pointwise Hessian");
    case ModelClass::Iid: {
      double mu = theta[0], s = theta[1];
      double inv2 = std::exp(-2.0 * s);
      MatrixXd h = MatrixXd::Zero(2, 2);
      for (int i = 0; i < model.n; ++i) {
        double d = y[i] - mu;
        h(0, 0) += -inv2;
        h(0, 1) += -2.0 * d * inv2;
        h(1, 1) += -2.0 * d * d * inv2;
      }
      h(1, 0) = h(0, 1);
      return h;
    }
  }
  throw std::logic_error("unknown model class");
}

double mean_loglik(const Model& model, const VectorXd& theta) {
  switch (model.cls) {
    case ModelClass::Glm: {
      if (!theta_feasible(model, theta)) {
        return -std::numeric_limits<double>::infinity();
      }
      VectorXd w = model.design.rows * theta;
      double acc = 0.0;
      for (int i = 0; i < model.n; ++i) {
        acc += model.law(i).mean() * w[i] - glm_cumulant(model.kind, w[i]).value;
      }
      return acc;
    }
    case ModelClass::Lad: {
      VectorXd w = model.design.rows * theta;
      double acc = 0.0;
      for (int i = 0; i < model.n; ++i) {
        acc += -0.5 * model.law(i).mean_abs_dev(w[i]);
      }
      return acc;
    }
    case ModelClass::Iid: {
      double mu = theta[0], s = theta[1];
      double inv2 = std::exp(-2.0 * s);
      double m = model.law(0).mean();
      double v = model.law(0).variance();
      double msq = v + (m - mu) * (m - mu);
      return model.n * (-kHalfLog2Pi - s - 0.5 * msq * inv2);
    }
  }
  throw std::logic_error("unknown model class");
}

VectorXd mean_grad(const Model& model, const VectorXd& theta) {
  switch (model.cls) {
    case ModelClass::Glm: {
      VectorXd w = model.design.rows * theta;
      VectorXd r(model.n);
      for (int i = 0; i < model.n; ++i) {
        r[i] = model.law(i).mean() - glm_cumulant(model.kind, w[i]).d1;
      }
      return model.design.rows.transpose() * r;
    }
    case ModelClass::Lad: {
      VectorXd w = model.design.rows * theta;
      VectorXd r(model.n);
      for (int i = 0; i < model.n; ++i) r[i] = 0.5 - model.law(i).cdf(w[i]);
      return model.design.rows.transpose() * r;
    }
    case ModelClass::Iid: {
      double mu = theta[0], s = theta[1];
      double inv2 = std::exp(-2.0 * s);
      double m = model.law(0).mean();
      double v = model.law(0).variance();
      double msq = v + (m - mu) * (m - mu);
      VectorXd g(2);
      g[0] = model.n * (m - mu) * inv2;
      g[1] = model.n * (-1.0 + msq * inv2);
      return g;
    }
  }
  throw std::logic_error("unknown model class");
}

MatrixXd mean_hess(const Model& model, const VectorXd& theta) {
  switch (model.cls) {
    case ModelClass::Glm: {
      VectorXd w = model.design.rows * theta;
      VectorXd d2(model.n);
      for (int i = 0; i < model.n; ++i) {
        d2[i] = glm_cumulant(model.kind, w[i]).d2;
      }
      return -(model.design.rows.transpose() * d2.asDiagonal() *
               model.design.rows);
    }
    case ModelClass::Lad: {
      VectorXd w = model.design.rows * theta;
      VectorXd dens(model.n);
      for (int i = 0; i < model.n; ++i) dens[i] = model.law(i).pdf(w[i]);
      return -(model.design.rows.transpose() * dens.asDiagonal() *
               model.design.rows);
    }
    case ModelClass::Iid: {
      double mu = theta[0], s = theta[1];
      double inv2 = std::exp(-2.0 * s);
      double m = model.law(0).mean();
      double v = model.law(0).variance();
      double msq = v + (m - mu) * (m - mu);
      MatrixXd h(2, 2);
      h(0, 0) = -model.n * inv2;
      h(0, 1) = -2.0 * model.n * (m - mu) * inv2;
      h(1, 0) = h(0, 1);
      h(1, 1) = -2.0 * model.n * msq * inv2;
      return h;
    }
  }
  throw std::logic_error("unknown model class");
}

VectorXd centered_grad(const Model& model, const VectorXd& y,
                       const VectorXd& theta) {
  return loglik_grad(model, y, theta) - mean_grad(model, theta);
}

}  // namespace fsmle
