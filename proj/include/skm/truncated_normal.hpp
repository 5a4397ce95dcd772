#pragma once

#include "skm/gaussian.hpp"

// Univariate normal restricted to an interval or a union of intervals.
// Tail masses are handled in log space so that segments far out in the tails
// (tens of standard deviations) still get correct relative weights.
namespace skm::truncnorm {

/// log Phi(x) for the standard normal CDF, accurate deep into the lower tail.
double log_cdf(double x);

/// log P(a <= Z <= b), Z standard normal, a <= b.
double log_mass(double a, double b);

/// One draw of Z ~ N(0,1) conditioned on a <= Z <= b, by inverse CDF in the
/// bulk and exponential rejection in the far tail.
double sample_standard(double a, double b, Rng& rng);

/// log P(X in set) for X ~ N(mean, sd^2). sd == 0 is a point mass.
double log_mass(double mean, double sd, const IntervalUnion& set);

struct Draw {
  double value = 0.0;
  double log_mass = 0.0;  // log P(X in set) under the untruncated law
};

/// X ~ N(mean, sd^2) conditioned on X in set. Throws NumericalError when the set
/// carries no mass (empty set, or sd == 0 with mean outside).
Draw sample(double mean, double sd, const IntervalUnion& set, Rng& rng);

}  // namespace skm::truncnorm
