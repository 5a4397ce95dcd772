#include "skm/truncated_normal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/erf.hpp>

#include "skm/errors.hpp"

namespace skm::truncnorm {
namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

// Below this point erfc underflows, so the asymptotic series takes over.
constexpr double kAsymptoticCutoff = -35.0;
// Above this standardized lower bound the inverse-CDF tail probability loses
// too many digits; switch to rejection from a shifted exponential.
constexpr double kTailRejection = 30.0;

double upper_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double uniform01_open(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = 0.0;
  do {
    v = u(rng);
  } while (v <= 0.0);
  return v;
}

// Z | a <= Z <= b for a >= kTailRejection (Robert 1995, with a uniform proposal
// when the interval is narrow compared with the exponential scale).
double sample_far_tail(double a, double b, Rng& rng) {
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  if (b - a < 1.0 / alpha) {
    for (;;) {
      const double z = a + (b - a) * uniform01_open(rng);
      if (std::log(uniform01_open(rng)) <= 0.5 * (a * a - z * z)) return z;
    }
  }
  std::exponential_distribution<double> expo(alpha);
  for (;;) {
    const double z = a + expo(rng);
    if (z > b) continue;
    const double d = z - alpha;
    if (std::log(uniform01_open(rng)) <= -0.5 * d * d) return z;
  }
}

// 0 <= a < b
double sample_upper(double a, double b, Rng& rng) {
  if (a >= kTailRejection) return sample_far_tail(a, b, rng);
  const double qa = upper_tail(a);
  const double qb = std::isinf(b) ? 0.0 : upper_tail(b);
  double z = a;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double u = qb + (qa - qb) * uniform01_open(rng);
    if (u <= 0.0) continue;
    z = kSqrt2 * boost::math::erfc_inv(2.0 * u);
    if (std::isfinite(z)) break;
  }
  return std::clamp(z, a, b);
}

}  // namespace

double log_cdf(double x) {
  if (std::isnan(x)) return x;
  if (x == -kInf) return -kInf;
  if (x > 0.0) return std::log1p(-upper_tail(x));
  if (x > kAsymptoticCutoff) return std::log(0.5 * std::erfc(-x / kSqrt2));
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

double log_mass(double a, double b) {
  if (!(a <= b)) return -kInf;
  if (a == b) return -kInf;
  if (a >= 0.0) return log_mass(-b, -a);
  if (b <= 0.0) {
    const double lb = log_cdf(b);
    const double la = log_cdf(a);
    if (la == -kInf) return lb;
    const double ratio = std::exp(la - lb);
    if (ratio < 1.0 - 1e-12) return lb + std::log1p(-ratio);
    // Interval so narrow that the CDF difference cancels: midpoint rule.
    const double mid = 0.5 * (a + b);
    return -0.5 * mid * mid - kLogSqrt2Pi + std::log(b - a);
  }
  return std::log(0.5 * (std::erf(b / kSqrt2) - std::erf(a / kSqrt2)));
}

double sample_standard(double a, double b, Rng& rng) {
  if (!(a < b)) {
    if (a == b && std::isfinite(a)) return a;
    throw NumericalError("truncated normal: empty interval");
  }
  if (a >= 0.0) return sample_upper(a, b, rng);
  if (b <= 0.0) return -sample_upper(-b, -a, rng);

  const double pa = 0.5 * std::erfc(-a / kSqrt2);
  const double pb = 0.5 * std::erfc(-b / kSqrt2);
  double z = 0.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double u = pa + (pb - pa) * uniform01_open(rng);
    if (u <= 0.0 || u >= 1.0) continue;
    z = -kSqrt2 * boost::math::erfc_inv(2.0 * u);
    if (std::isfinite(z)) break;
  }
  return std::clamp(z, a, b);
}

double log_mass(double mean, double sd, const IntervalUnion& set) {
  if (sd <= 0.0) return set.contains(mean) ? 0.0 : -kInf;
  double best = -kInf;
  std::vector<double> logs;
  logs.reserve(set.segments().size());
  for (const Segment& s : set.segments()) {
    const double lm = log_mass((s.lower - mean) / sd, (s.upper - mean) / sd);
    logs.push_back(lm);
    best = std::max(best, lm);
  }
  if (best == -kInf) return -kInf;
  double acc = 0.0;
  for (double lm : logs) acc += std::exp(lm - best);
  return best + std::log(acc);
}

Draw sample(double mean, double sd, const IntervalUnion& set, Rng& rng) {
  if (sd <= 0.0) {
    if (set.contains(mean)) return {mean, 0.0};
    throw NumericalError("truncated normal: degenerate law outside the selection set");
  }
  const auto segments = set.segments();
  if (segments.size() == 1) {
    const Segment& s = segments.front();
    const double a = (s.lower - mean) / sd;
    const double b = (s.upper - mean) / sd;
    const double lm = log_mass(a, b);
    if (lm == -kInf) throw NumericalError("truncated normal: selection set carries no mass");
    const double x = mean + sd * sample_standard(a, b, rng);
    return {std::clamp(x, s.lower, s.upper), lm};
  }

  std::vector<double> logs(segments.size());
  double best = -kInf;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    logs[k] = log_mass((segments[k].lower - mean) / sd, (segments[k].upper - mean) / sd);
    best = std::max(best, logs[k]);
  }
  if (best == -kInf) throw NumericalError("truncated normal: selection set carries no mass");
  double total = 0.0;
  for (double& w : logs) {
    w = std::exp(w - best);
    total += w;
  }
  const double pick = total * uniform01_open(rng);
  std::size_t chosen = segments.size() - 1;
  double running = 0.0;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    running += logs[k];
    if (pick <= running && logs[k] > 0.0) {
      chosen = k;
      break;
    }
  }
  while (logs[chosen] == 0.0 && chosen > 0) --chosen;
  const Segment& s = segments[chosen];
  const double x = mean + sd * sample_standard((s.lower - mean) / sd, (s.upper - mean) / sd, rng);
  return {std::clamp(x, s.lower, s.upper), best + std::log(total)};
}

}  // namespace skm::truncnorm
