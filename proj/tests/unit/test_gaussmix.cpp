#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "cdisent/core/random.hpp"
#include "cdisent/gaussmix/gaussmix.hpp"
#include "cdisent/gaussmix/random_mixture.hpp"

using namespace cdisent;
using namespace cdisent::gaussmix;

namespace {

std::vector<double> random_spd(Rng& rng, std::size_t d) {
  Eigen::MatrixXd a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::MatrixXd s = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
  std::vector<double> out(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = s(i, j);
  return out;
}

}  // namespace

TEST(Conditional, DiagonalIgnoresObservedValues) {
  const auto g = ComponentGaussian::diag({1.0, -2.0, 0.5}, {1.0, 2.0, 3.0});
  const auto c = conditional(g, {1}, {10.0});
  EXPECT_EQ(c.mean(0), 1.0);
  EXPECT_EQ(c.mean(1), 0.5);
  EXPECT_EQ(c.cov(1, 1), 3.0);
}

TEST(Conditional, BivariateClosedFormAndMonteCarlo) {
  const auto g = ComponentGaussian::dense({0.0, 0.0}, {1.0, 0.5, 0.5, 1.0});
  const auto c = conditional(g, {1}, {1.2});
  EXPECT_NEAR(c.mean(0), 0.6, 1e-15);
  EXPECT_NEAR(c.cov(0, 0), 0.75, 1e-15);

  // Monte Carlo: regress Z1 on Z2 over 10^6 draws and evaluate at z = 1.2.
  Rng rng(77);
  const int n = 1'000'000;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> z1(n), z2(n);
  for (int k = 0; k < n; ++k) {
    const double a = rng.normal(), b = rng.normal();
    z2[k] = a;
    z1[k] = 0.5 * a + std::sqrt(0.75) * b;
    sx += z2[k];
    sy += z1[k];
    sxx += z2[k] * z2[k];
    sxy += z2[k] * z1[k];
  }
  const double mx = sx / n, my = sy / n;
  const double slope = (sxy / n - mx * my) / (sxx / n - mx * mx);
  const double pred = my + slope * (1.2 - mx);
  double rss = 0;
  for (int k = 0; k < n; ++k) {
    const double r = z1[k] - (my + slope * (z2[k] - mx));
    rss += r * r;
  }
  const double resid_var = rss / (n - 2);
  const double se = std::sqrt(resid_var * (1.0 / n + (1.2 - mx) * (1.2 - mx) / (sxx - n * mx * mx)));
  EXPECT_NEAR(pred, 0.6, 3 * se);
  EXPECT_NEAR(resid_var, 0.75, 3 * 0.75 * std::sqrt(2.0 / n));
}

TEST(Conditional, AllButOneMatchesEigenSolve) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(6);
    const auto cov = random_spd(rng, d);
    const auto mu = random_mean(rng, d);
    const auto g = ComponentGaussian::dense(mu, cov);
    const std::size_t i = rng.below(d);
    std::vector<std::size_t> obs;
    std::vector<double> vals;
    for (std::size_t k = 0; k < d; ++k)
      if (k != i) {
        obs.push_back(k);
        vals.push_back(rng.normal());
      }
    const auto c = conditional(g, obs, vals);

    Eigen::MatrixXd sjj(d - 1, d - 1);
    Eigen::VectorXd skj(d - 1), r(d - 1);
    for (std::size_t a = 0; a < obs.size(); ++a) {
      skj(a) = cov[i * d + obs[a]];
      r(a) = vals[a] - mu[obs[a]];
      for (std::size_t b = 0; b < obs.size(); ++b) sjj(a, b) = cov[obs[a] * d + obs[b]];
    }
    const Eigen::VectorXd sol = sjj.partialPivLu().solve(r);
    const Eigen::VectorXd w = sjj.partialPivLu().solve(skj);
    EXPECT_NEAR(c.mean(0), mu[i] + skj.dot(sol), 1e-9);
    EXPECT_NEAR(c.cov(0, 0), cov[i * d + i] - skj.dot(w), 1e-9);
  }
}

TEST(Conditional, SingularBlockNamesIndices) {
  const auto g = ComponentGaussian::dense({0, 0, 0}, {1, 0, 0, 0, 0, 0, 0, 0, 1});
  try {
    conditional(g, {1}, {0.3});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Conditional, MarginalMomentsRecovered) {
  // The conditional mean is affine in z_j; with its slope B the law of total
  // variance gives S_kk = S_{k|j} + B S_jj B^T.
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 3 + rng.below(4);
    const auto cov = random_spd(rng, d);
    const auto mu = random_mean(rng, d);
    const auto g = ComponentGaussian::dense(mu, cov);
    const std::vector<std::size_t> obs{0, 1};
    const auto at_mean = conditional(g, obs, {mu[0], mu[1]});
    for (std::size_t k = 0; k < d - 2; ++k) EXPECT_NEAR(at_mean.mean(k), mu[k + 2], 1e-9);
    const std::size_t nk = d - 2;
    std::vector<std::vector<double>> b(nk, std::vector<double>(2));
    for (std::size_t a = 0; a < 2; ++a) {
      std::vector<double> v{mu[0], mu[1]};
      v[a] += 1.0;
      const auto shifted = conditional(g, obs, v);
      for (std::size_t k = 0; k < nk; ++k) b[k][a] = shifted.mean(k) - at_mean.mean(k);
    }
    for (std::size_t p = 0; p < nk; ++p)
      for (std::size_t q = 0; q < nk; ++q) {
        double explained = 0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t c = 0; c < 2; ++c) explained += b[p][a] * cov[obs[a] * d + obs[c]] * b[q][c];
        EXPECT_NEAR(at_mean.cov(p, q) + explained, cov[(p + 2) * d + q + 2], 1e-9);
      }
  }
}

TEST(Component, ValidatesCovariance) {
  EXPECT_THROW(ComponentGaussian::dense({0, 0}, {1, 0.5, 0.4, 1}), Error);  // asymmetric
  EXPECT_THROW(ComponentGaussian::dense({0, 0}, {1, 2, 2, 1}), Error);      // indefinite
  EXPECT_THROW(ComponentGaussian::diag({0}, {-1}), Error);
}

TEST(KlUnitCov, Values) {
  EXPECT_EQ(kl_unit_cov({1.0, 1.0, 1.0}), 0.0);
  EXPECT_NEAR(kl_unit_cov({2.0}), 0.5 * (1.0 - std::log(2.0)), 1e-15);
  EXPECT_NEAR(kl_unit_cov({2.0}), 0.15343, 1e-5);
  const double tiny = kl_unit_cov({1e-12});
  EXPECT_TRUE(std::isfinite(tiny));
  EXPECT_GT(tiny, 10.0);
  EXPECT_THROW(kl_unit_cov({0.0}), NumericError);
}

TEST(KlUnitCov, MatchesGeneralGaussianKl) {
  // KL(N(m, S1) || N(m, S2)) = 1/2 [tr(S2^-1 S1) - D + ln det S2 - ln det S1], S2 = I.
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    std::vector<double> var(d);
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < d; ++i) s1(i, i) = var[i] = rng.uniform(0.05, 4.0);
    const Eigen::MatrixXd s2 = Eigen::MatrixXd::Identity(d, d);
    const double general = 0.5 * ((s2.inverse() * s1).trace() - static_cast<double>(d) +
                                  std::log(s2.determinant()) - std::log(s1.determinant()));
    const double kl = kl_unit_cov(var);
    EXPECT_NEAR(kl, general, 1e-12);
    EXPECT_GE(kl, 0.0);
  }
}

TEST(Lc, DiagonalComponentsVanish) {
  const MixtureLatent m({ComponentGaussian::diag({0, 1}, {1, 2}), ComponentGaussian::diag({3, -1}, {0.5, 1})},
                        {0.3, 0.7});
  EXPECT_LE(lc_moment(m), 1e-9);
  EXPECT_LE(lc_moment(m, LcAggregate::Sup), 1e-9);
}

TEST(Lc, SingleCorrelatedComponent) {
  const MixtureLatent m({ComponentGaussian::dense({0, 0}, {1, 0.5, 0.5, 1})}, {1.0});
  EXPECT_GT(lc_moment(m, {{1.0, 1.0}, {-0.5, 2.0}}), 0.01);
}

TEST(Lc, ZeroWeightComponentsIgnored) {
  const MixtureLatent m({ComponentGaussian::diag({0, 1}, {1, 1}), ComponentGaussian::dense({0, 0}, {1, 0.9, 0.9, 1})},
                        {1.0, 0.0});
  EXPECT_LE(lc_moment(m, {{2.0, -1.0}, {0.5, 0.5}}), 1e-9);
}

TEST(Lc, RandomDiagonalMixtures) {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const MixtureLatent m = random_diag_mixture(rng);
    EXPECT_LE(lc_moment(m), 1e-9) << trial;
  }
}

TEST(Lc, RandomCorrelatedMixtures) {
  Rng rng(42);
  double smallest = 1e9;
  for (int trial = 0; trial < 200; ++trial) {
    const MixtureLatent m = random_correlated_mixture(rng);
    smallest = std::min(smallest, lc_moment(m));
  }
  EXPECT_GT(smallest, 1e-3);
}

TEST(DocMoment, SingleComponentIsConditionalMean) {
  const auto g = ComponentGaussian::dense({0.5, -1.0, 2.0}, {2, 0.3, 0.1, 0.3, 1, -0.2, 0.1, -0.2, 1.5});
  const MixtureLatent m({g}, {1.0});
  EXPECT_EQ(doc_moment(m, 1, {0.7, 1.1}), conditional_mean(g, 1, {0.7, 1.1}));
}

TEST(DocMoment, DiagonalComponentsGiveWeightedMeans) {
  const MixtureLatent m({ComponentGaussian::diag({1, 2}, {1, 1}), ComponentGaussian::diag({-3, 0}, {2, 0.5})},
                        {0.25, 0.75});
  for (double z : {-5.0, 0.0, 3.3}) EXPECT_NEAR(doc_moment(m, 0, {z}), 0.25 * 1 + 0.75 * -3, 1e-15);
}

TEST(DocMoment, MatchesStratifiedMonteCarlo) {
  // Two hand-set components; per stratum regress Z1 on Z2, evaluate at z2,
  // then weight the strata by their empirical frequency.
  const MixtureLatent m({ComponentGaussian::dense({0, 0}, {1, 0.6, 0.6, 1}),
                         ComponentGaussian::dense({2, -1}, {0.5, -0.2, -0.2, 2})},
                        {0.4, 0.6});
  const double z2 = 0.8;
  const double exact = doc_moment(m, 0, {z2});
  Rng rng(9);
  const int n = 1'000'000;
  double est = 0.0, var_est = 0.0;
  std::vector<std::vector<std::pair<double, double>>> strata(2);
  for (int k = 0; k < n; ++k) {
    const std::size_t c = rng.uniform() < 0.4 ? 0 : 1;
    const auto& g = m.component(c);
    const double a = rng.normal(), b = rng.normal();
    const double s11 = g.cov(0, 0), s12 = g.cov(0, 1), s22 = g.cov(1, 1);
    const double x2 = g.mean(1) + std::sqrt(s22) * a;
    const double x1 = g.mean(0) + s12 / std::sqrt(s22) * a + std::sqrt(s11 - s12 * s12 / s22) * b;
    strata[c].emplace_back(x1, x2);
  }
  for (const auto& s : strata) {
    const double cnt = static_cast<double>(s.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [y, x] : s) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double mx = sx / cnt, my = sy / cnt;
    const double slope = (sxy / cnt - mx * my) / (sxx / cnt - mx * mx);
    double rss = 0;
    for (auto [y, x] : s) rss += std::pow(y - my - slope * (x - mx), 2);
    const double w = cnt / n;
    est += w * (my + slope * (z2 - mx));
    var_est += w * w * (rss / (cnt - 2)) * (1 / cnt + (z2 - mx) * (z2 - mx) / (sxx - cnt * mx * mx));
  }
  // Stratum frequencies also fluctuate; add their binomial contribution.
  const double c0 = conditional_mean(m.component(0), 0, {z2}), c1 = conditional_mean(m.component(1), 0, {z2});
  var_est += (c0 - c1) * (c0 - c1) * 0.4 * 0.6 / n;
  EXPECT_NEAR(est, exact, 3 * std::sqrt(var_est));
}

TEST(MixtureLogpdf, StandardNormalAtZero) {
  const MixtureLatent m({ComponentGaussian::diag({0}, {1})}, {1.0});
  EXPECT_NEAR(mixture_logpdf(m, {0.0}), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(mixture_logpdf(m, {0.0}), -0.91894, 1e-5);
}

TEST(MixtureLogpdf, IdenticalComponentsCollapse) {
  const auto g = ComponentGaussian::dense({1, 2}, {1, 0.3, 0.3, 2});
  const MixtureLatent one({g}, {1.0});
  const MixtureLatent two({g, g}, {0.2, 0.8});
  for (auto z : {std::vector<double>{0, 0}, std::vector<double>{1.5, -2}})
    EXPECT_NEAR(mixture_logpdf(two, z), mixture_logpdf(one, z), 1e-12);
}

TEST(MixtureLogpdf, IntegratesToOne) {
  Rng rng(12);
  std::vector<ComponentGaussian> comps;
  for (int c = 0; c < 3; ++c) {
    auto mu = random_mean(rng, 2);
    auto cov = random_spd(rng, 2);
    for (auto& v : cov) v *= 0.3;
    comps.push_back(ComponentGaussian::dense(mu, cov));
  }
  const MixtureLatent m(comps, random_weights(rng, 3, 0.1));
  const double h = 0.025, lo = -12, hi = 12;
  double total = 0.0;
  for (double x = lo; x < hi; x += h)
    for (double y = lo; y < hi; y += h) total += std::exp(mixture_logpdf(m, {x + h / 2, y + h / 2})) * h * h;
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(MixtureLogpdf, NonPositiveDefiniteThrows) {
  const MixtureLatent m({ComponentGaussian::dense({0, 0}, {1, 1, 1, 1})}, {1.0});
  EXPECT_THROW(mixture_logpdf(m, {0, 0}), NumericError);
}

TEST(Mixture, ValidatesWeights) {
  const auto g = ComponentGaussian::diag({0}, {1});
  EXPECT_THROW(MixtureLatent({g, g}, {0.5, 0.6}), Error);
  EXPECT_THROW(MixtureLatent({g, g}, {1.5, -0.5}), Error);
  EXPECT_THROW(MixtureLatent({g, ComponentGaussian::diag({0, 0}, {1, 1})}, {0.5, 0.5}), ShapeError);
}
