#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fsmle/rng.hpp"

namespace fsmle {

// Law of a scalar observation.  Everything downstream (sampling, moment
// matrices, median-regression geometry) works through this interface, so a
// misspecified truth is just a different law plugged into the same model.
//
// mean_abs_dev(t) = E|X - t| feeds the exact mean objective of the
// median-regression model; laws without a closed form integrate the folded
// cdf numerically.
class ScalarLaw {
 public:
  virtual ~ScalarLaw() = default;

  virtual double sample(Rng& rng) const = 0;
  virtual double mean() const = 0;
  virtual double variance() const = 0;
  double sd() const;

  virtual bool has_density() const { return false; }
  virtual double pdf(double x) const;
  virtual double cdf(double x) const = 0;
  virtual double mean_abs_dev(double t) const = 0;

  virtual std::string describe() const = 0;
};

using LawPtr = std::shared_ptr<const ScalarLaw>;

LawPtr make_normal_law(double mu, double sigma);
LawPtr make_laplace_law(double mu, double scale);
LawPtr make_student_t_law(double mu, double scale, double df);
// Two-point law on {0,1} with P(X=1) = p.
LawPtr make_bernoulli_law(double p);
// Poisson with the given mean.
LawPtr make_poisson_law(double mean);
// Negative exponential: density rate*exp(y*rate) on y <= 0 (rate > 0).
LawPtr make_neg_exponential_law(double rate);
// base with probability 1-fraction, contaminant with probability fraction.
LawPtr make_mixture_law(LawPtr base, double fraction, LawPtr contaminant);
LawPtr make_shifted_law(LawPtr base, double shift);

// Gaussian kernel density estimate from draws of an opaque sampler, binned so
// evaluation is O(1).  Used when a law exposes no analytic density.
LawPtr make_kernel_law(const std::vector<double>& draws);
LawPtr kernel_law_from_sampler(const ScalarLaw& law, int n_draws, Rng& rng);

// Test helper: forwards sampling and moments but hides the density, forcing
// the kernel fallback path.
LawPtr make_sampler_only_law(LawPtr base);

}  // namespace fsmle
