#pragma once

#include <utility>
#include <vector>

namespace gecal {

// CDF of the t distribution with 3 degrees of freedom, closed form:
//   F(x) = 1/2 + (1/pi) * { (x/sqrt(3)) / (1 + x^2/3) + atan(x/sqrt(3)) }.
double t3_cdf(double x);

// Standard normal CDF and quantile.  The quantile uses a rational
// approximation refined by one Halley step, accurate to ~1e-15.
double normal_cdf(double x);
double normal_quantile(double p);

// Two-sided normal confidence interval theta +- z_{1-(1-level)/2} * sqrt(var).
// Requires var >= 0 and level in (0,1).
std::pair<double, double> confidence_interval(double theta, double variance, double level);

// Linear-interpolation (type 7) sample quantile, q in [0,1].
double quantile(std::vector<double> values, double q);

}  // namespace gecal
