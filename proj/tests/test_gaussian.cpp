#include <doctest.h>

#include <cmath>
#include <numbers>

#include "skm/errors.hpp"
#include "skm/gaussian.hpp"

using namespace skm;

namespace {

GaussianDist bivariate(double rho) {
  Matrix cov(2, 2);
  cov << 1.0, rho, rho, 1.0;
  return GaussianDist(Vector::Zero(2), cov);
}

GaussianDist random_gaussian(Index k, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Matrix b(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) b(i, j) = n01(rng);
  Vector mean(k);
  for (Index i = 0; i < k; ++i) mean(i) = n01(rng);
  return GaussianDist(mean, b * b.transpose() + Matrix::Identity(k, k));
}

}  // namespace

TEST_CASE("interval union membership, projection and validation") {
  const IntervalUnion u({{-kInf, -0.2}, {0.5, kInf}});
  CHECK(u.contains(-0.2));
  CHECK(u.contains(0.5));
  CHECK_FALSE(u.contains(0.0));
  CHECK(u.project(0.1) == doctest::Approx(-0.2));
  CHECK(u.project(0.2) == doctest::Approx(0.5));
  CHECK(u.project(0.15) == doctest::Approx(-0.2));  // tie goes low
  CHECK(u.project(3.0) == 3.0);
  CHECK(IntervalUnion().empty());
  CHECK(IntervalUnion::real_line().is_real_line());
  CHECK_THROWS_AS(IntervalUnion({{1.0, 0.0}}), PreconditionError);
  CHECK_THROWS_AS(IntervalUnion({{0.0, 2.0}, {1.0, 3.0}}), PreconditionError);
}

TEST_CASE("marginalize extracts rows and columns") {
  Matrix cov(2, 2);
  cov << 4.0, 1.0, 1.0, 9.0;
  const GaussianDist g(Vector::LinSpaced(2, 1.0, 2.0), cov);
  const std::vector<Index> keep{1};
  const GaussianDist m = marginalize(g, keep);
  CHECK(m.mean()(0) == 2.0);
  CHECK(m.cov()(0, 0) == 9.0);
  const std::vector<Index> all{0, 1};
  CHECK(marginalize(g, all).cov() == g.cov());
  const std::vector<Index> bad{2};
  CHECK_THROWS_AS(marginalize(g, bad), PreconditionError);
}

TEST_CASE("bivariate conditional matches the closed form") {
  const std::vector<Index> obs{1};
  const GaussianDist c = condition(bivariate(0.5), obs, Vector::Constant(1, 1.0));
  CHECK(c.mean()(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.cov()(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("independent blocks condition to their marginal") {
  Matrix cov = Matrix::Zero(3, 3);
  cov.diagonal() << 2.0, 3.0, 5.0;
  const GaussianDist g(Vector::LinSpaced(3, 1.0, 3.0), cov);
  const std::vector<Index> obs{2};
  const GaussianDist c = condition(g, obs, Vector::Constant(1, 100.0));
  CHECK(c.mean()(0) == 1.0);
  CHECK(c.mean()(1) == 2.0);
  CHECK(c.cov()(1, 1) == 3.0);
}

TEST_CASE("conditional covariance does not depend on the observed values") {
  const GaussianDist g = random_gaussian(5, 7);
  const std::vector<Index> obs{1, 3};
  const GaussianDist a = condition(g, obs, Vector::Constant(2, -4.0));
  const GaussianDist b = condition(g, obs, Vector::Constant(2, 9.0));
  CHECK(a.cov() == b.cov());
}

TEST_CASE("marginalize and condition commute on disjoint index sets") {
  const GaussianDist g = random_gaussian(6, 11);
  const std::vector<Index> obs{4, 5};
  const Vector val = Vector::LinSpaced(2, 0.3, -1.2);
  const GaussianDist c = condition(g, obs, val);  // over 0..3
  const std::vector<Index> keep_after{0, 2};
  const GaussianDist route_a = marginalize(c, keep_after);

  const std::vector<Index> keep_first{0, 2, 4, 5};
  const std::vector<Index> obs_sub{2, 3};
  const GaussianDist route_b = condition(marginalize(g, keep_first), obs_sub, val);
  CHECK((route_a.mean() - route_b.mean()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((route_a.cov() - route_b.cov()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("observed block that is not PSD within jitter is a numerical error") {
  Matrix cov(3, 3);
  cov << 1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0;
  const GaussianDist g(Vector::Zero(3), cov);
  const std::vector<Index> obs{1, 2};
  CHECK_THROWS_AS(condition(g, obs, Vector::Zero(2)), NumericalError);
}

TEST_CASE("jittered cholesky rescues round-off indefiniteness") {
  Matrix c(2, 2);
  c << 1.0, 1.0, 1.0, 1.0 - 1e-14;
  const JitteredCholesky f = jittered_cholesky(c);
  CHECK(f.jitter > 0.0);
  CHECK(f.jitter <= 1e-8);
  Matrix indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(jittered_cholesky(indefinite), NumericalError);
  CHECK_FALSE(is_psd(indefinite));
}

TEST_CASE("sampling: degenerate, CLT bound and determinism") {
  const GaussianDist point(Vector::Constant(3, 2.5), Matrix::Zero(3, 3));
  const Matrix p = sample(point, 10, 3);
  CHECK((p.array() == 2.5).all());

  const Index n = 100000;
  const GaussianDist std2(Vector::Zero(2), Matrix::Identity(2, 2));
  const Matrix draws = sample(std2, n, 42);
  const Vector mean = draws.colwise().mean();
  CHECK(std::abs(mean(0)) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(mean(1)) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(sample(std2, 50, 9) == sample(std2, 50, 9));
}

TEST_CASE("log density: mode value, symmetry and normalization") {
  const GaussianDist g1(Vector::Zero(1), Matrix::Identity(1, 1));
  CHECK(log_density(g1, Vector::Zero(1)) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)));
  const GaussianDist g = random_gaussian(3, 5);
  const Vector x = Vector::LinSpaced(3, -1.0, 2.0);
  CHECK(log_density(g, x) == doctest::Approx(log_density(g, 2.0 * g.mean() - x)).epsilon(1e-12));

  const GaussianDist h(Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 2.0));
  const int k = 20001;
  const double lo = 0.7 - 12.0 * std::sqrt(2.0), hi = 0.7 + 12.0 * std::sqrt(2.0);
  const double step = (hi - lo) / (k - 1);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    const double w = (i == 0 || i == k - 1) ? 0.5 : 1.0;
    acc += w * std::exp(log_density(h, Vector::Constant(1, lo + i * step)));
  }
  CHECK(std::abs(acc * step - 1.0) < 1e-6);
}

TEST_CASE("rect_probability special cases and orthant closed form") {
  const SelectionSet everything = SelectionSet::uniform(2, IntervalUnion::real_line());
  const ProbabilityEstimate full = rect_probability(bivariate(0.3), everything);
  CHECK(full.probability == 1.0);
  CHECK(full.std_error == 0.0);

  const SelectionSet orthant = SelectionSet::uniform(2, IntervalUnion({{0.0, kInf}}));
  const ProbabilityEstimate indep = rect_probability(bivariate(0.0), orthant, {20000, 1});
  CHECK(std::abs(indep.probability - 0.25) <= 3.0 * indep.std_error + 1e-12);

  const double exact = 0.25 + std::asin(0.5) / (2.0 * std::numbers::pi);
  const ProbabilityEstimate corr = rect_probability(bivariate(0.5), orthant, {20000, 2});
  CHECK(std::abs(corr.probability - exact) <= 3.0 * corr.std_error);

  CHECK(rect_probability(bivariate(0.5), orthant, {5000, 3}).probability ==
        rect_probability(bivariate(0.5), orthant, {5000, 3}).probability);
}

TEST_CASE("rect_probability is monotone in the selection set") {
  const GaussianDist g = random_gaussian(3, 19);
  const SelectionSet small = SelectionSet::uniform(3, IntervalUnion({{-1.0, 1.0}}));
  const SelectionSet large = SelectionSet::uniform(3, IntervalUnion({{-2.0, 2.0}}));
  const ProbabilityEstimate a = rect_probability(g, small, {20000, 4});
  const ProbabilityEstimate b = rect_probability(g, large, {20000, 5});
  CHECK(b.probability >= a.probability - 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("operations leave inputs unmodified") {
  const GaussianDist g = random_gaussian(4, 23);
  const GaussianDist copy = g;
  const std::vector<Index> obs{0};
  (void)condition(g, obs, Vector::Ones(1));
  (void)marginalize(g, obs);
  (void)sample(g, 3, 1);
  CHECK(g.mean() == copy.mean());
  CHECK(g.cov() == copy.cov());
}

TEST_CASE("index helpers") {
  const std::vector<Index> sub{1, 3};
  CHECK(complement(5, sub) == std::vector<Index>{0, 2, 4});
  CHECK(index_range(2, 3) == std::vector<Index>{2, 3, 4});
}
