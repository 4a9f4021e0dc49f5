#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fsmle/design.hpp"
#include "fsmle/laws.hpp"
#include "fsmle/linalg.hpp"

namespace fsmle {

enum class ModelClass { Iid, Glm, Lad };

enum class GlmKind { Logistic, Poisson, Exponential, Gaussian };

std::string to_string(ModelClass c);
std::string to_string(GlmKind k);

// Cumulant of the canonical exponential family: value and first two
// derivatives at the linear predictor w.
struct Cumulant {
  double value;
  double d1;
  double d2;
};

Cumulant glm_cumulant(GlmKind kind, double w);

// Data-generating law, possibly outside the fitted family.
struct TruthSpec {
  enum class Kind { InFamily, CustomMean, Contaminated };

  Kind kind = Kind::InFamily;
  VectorXd theta_true;  // InFamily
  VectorXd means;       // CustomMean: E Y_i, one per observation
  LawPtr residual;      // CustomMean: additive residual; null selects the
                        // family's own noise at the given mean
  std::shared_ptr<const TruthSpec> base;  // Contaminated
  double fraction = 0.0;
  LawPtr contaminant;  // absolute law of a contaminated observation

  static TruthSpec in_family(VectorXd theta);
  static TruthSpec custom_mean(VectorXd means, LawPtr residual = nullptr);
  static TruthSpec contaminated(TruthSpec base, double fraction,
                                LawPtr contaminant);
  std::string describe() const;
};

// A statistical model: per-observation quasi-log-density with derivatives,
// a design, and the true law of every observation.
struct Model {
  ModelClass cls = ModelClass::Glm;
  int n = 0;
  int p = 0;
  Design design;        // empty for the pure i.i.d. class
  GlmKind kind = GlmKind::Gaussian;
  VectorXd scale;       // GLM: exponential-moment scale S_i per observation
  std::vector<LawPtr> laws;  // law of Y_i; a single shared law when i.i.d.
  TruthSpec truth;

  const ScalarLaw& law(int i) const {
    return *laws[laws.size() == 1 ? 0 : static_cast<size_t>(i)];
  }
};

// scale: optional exponential-moment scales; empty selects sd(Y_i).
Model build_glm(const Design& design, GlmKind kind, const TruthSpec& truth,
                VectorXd scale = VectorXd());

// Median regression with loss -|y - w|/2.  In-family truth means unit
// Laplace noise around the fitted line.  Laws without an analytic density
// are replaced by a kernel estimate from oracle draws.
Model build_lad(const Design& design, const TruthSpec& truth);

// Smooth i.i.d. family: Gaussian with parameters (mu, log sigma), p = 2.
Model build_iid_gaussian(int n, const TruthSpec& truth);

// Y_k for replication k, byte-reproducible in (master_seed, k).
VectorXd sample_data(const Model& model, std::uint64_t master_seed,
                     std::uint64_t k);

VectorXd truth_means(const Model& model);
VectorXd truth_sds(const Model& model);

// Whether theta is inside the natural-parameter domain for every observation.
bool theta_feasible(const Model& model, const VectorXd& theta);

// Total quasi-log-likelihood and derivatives at data Y.
double loglik(const Model& model, const VectorXd& y, const VectorXd& theta);
VectorXd loglik_grad(const Model& model, const VectorXd& y,
                     const VectorXd& theta);
// Undefined for the median-regression class.
MatrixXd loglik_hess(const Model& model, const VectorXd& y,
                     const VectorXd& theta);

// E L(theta) under the true law, exact (no Monte Carlo).
double mean_loglik(const Model& model, const VectorXd& theta);
VectorXd mean_grad(const Model& model, const VectorXd& theta);
MatrixXd mean_hess(const Model& model, const VectorXd& theta);

// Centered score: grad L(theta) - grad E L(theta).
VectorXd centered_grad(const Model& model, const VectorXd& y,
                       const VectorXd& theta);

}  // namespace fsmle
