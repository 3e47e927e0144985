#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "cdisent/datagen/dataset.hpp"
#include "cdisent/datagen/dataset_io.hpp"
#include "cdisent/datagen/render.hpp"
#include "cdisent/datagen/spec.hpp"
#include "cdisent/datagen/stats.hpp"

using namespace cdisent;
using namespace cdisent::datagen;

namespace {

FactorSpec image_factors() {
  return FactorSpec{{{"shape", 3}, {"hue", 6}, {"size", 3}, {"posx", 4}, {"posy", 4}}};
}

GenSpec image_spec(double strength = 0.9) {
  ObservationSpec obs;
  obs.mode = ObsMode::Image;
  obs.noise = 0.02;
  return make_confounded_spec(image_factors(), 4, {{{"hue", "shape"}, strength}}, obs);
}

GenSpec tabular_spec(std::size_t n_conf = 4, double strength = 0.9, double noise = 0.1) {
  ObservationSpec obs;
  obs.dim = 16;
  obs.noise = noise;
  obs.mixing_seed = 3;
  return make_confounded_spec(FactorSpec{{{"shape", 4}, {"hue", 4}, {"size", 3}, {"pos", 3}}}, n_conf,
                              {{{"hue", "shape"}, strength}}, obs);
}

/// Two-sample chi-square homogeneity test on the joint of two label columns.
double homogeneity_p(const LabeledDataset& a, const LabeledDataset& b, std::size_t k1, std::size_t k2) {
  const std::size_t c1 = a.factor_cards[k1], c2 = a.factor_cards[k2];
  const auto ta = contingency(a.factor_column(k1), a.factor_column(k2), c1, c2);
  const auto tb = contingency(b.factor_column(k1), b.factor_column(k2), c1, c2);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double chi2 = 0.0;
  int cells = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double tot = ta[i] + tb[i];
    if (tot == 0) continue;
    ++cells;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    chi2 += (ta[i] - ea) * (ta[i] - ea) / ea + (tb[i] - eb) * (tb[i] - eb) / eb;
  }
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

LabeledDataset stratum(const LabeledDataset& ds, std::uint16_t c) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.c[i] == c) idx.push_back(i);
  return ds.subset(idx);
}

}  // namespace

TEST(Spec, Validation) {
  EXPECT_THROW(FactorSpec({{{"a", 1}}}).validate(), Error);
  EXPECT_THROW(FactorSpec({{{"a", 2}, {"a", 3}}}).validate(), Error);
  auto g = tabular_spec();
  g.conditionals[1][0][0] += 0.1;
  EXPECT_THROW(g.validate(), Error);
  ObservationSpec obs;
  obs.mode = ObsMode::Image;
  EXPECT_THROW(make_confounded_spec(FactorSpec{{{"texture", 2}}}, 2, {}, obs), Error);
}

TEST(Spec, JsonRoundTripAndCompactForm) {
  const auto g = image_spec();
  const auto back = genspec_from_json(to_json(g));
  EXPECT_EQ(to_json(back), to_json(g));
  const auto compact = nlohmann::json::parse(R"({
    "factors": [{"name": "shape", "cardinality": 3}, {"name": "hue", "cardinality": 6},
                {"name": "size", "cardinality": 3}, {"name": "posx", "cardinality": 4},
                {"name": "posy", "cardinality": 4}],
    "confounders": 4,
    "rules": [{"factors": ["hue", "shape"], "strength": 0.9}],
    "observation": {"mode": "image", "height": 16, "width": 16, "noise": 0.02}
  })");
  EXPECT_EQ(to_json(genspec_from_json(compact)), to_json(g));
  EXPECT_THROW(genspec_from_json(nlohmann::json::parse(R"({"factors": 3})")), FormatError);
}

TEST(Spec, DecorrelatedKeepsMarginals) {
  const auto g = tabular_spec();
  const auto d = g.decorrelated();
  EXPECT_EQ(d.n_confounders(), 1u);
  const auto a = g.factor_marginals(), b = d.factor_marginals();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t v = 0; v < a[k].size(); ++v) EXPECT_NEAR(a[k][v], b[k][v], 1e-15);
}

TEST(Render, DeterministicImage) {
  const auto spec = image_spec();
  const std::vector<std::uint16_t> g{1, 2, 0, 3, 1};
  EXPECT_EQ(render(spec, g, 5), render(spec, g, 5));
  EXPECT_NE(render(spec, g, 5), render(spec, g, 6));
}

TEST(Render, HueChangeConfinedToForeground) {
  const auto spec = image_spec();
  const Renderer r(spec);
  const std::vector<std::uint16_t> a{2, 0, 1, 1, 2}, b{2, 3, 1, 1, 2};
  const auto xa = r.render(a, 9), xb = r.render(b, 9);
  const auto cov = r.coverage(a);
  std::size_t fg = 0;
  for (std::size_t p = 0; p < cov.size(); ++p) {
    if (cov[p] > 0) ++fg;
    for (std::size_t ch = 0; ch < 3; ++ch)
      if (cov[p] == 0) {
        EXPECT_EQ(xa[p * 3 + ch], xb[p * 3 + ch]);
      }
  }
  EXPECT_GT(fg, 4u);
  EXPECT_NE(xa, xb);
}

TEST(Render, AntiAliasedEdges) {
  const auto spec = image_spec();
  const auto cov = Renderer(spec).coverage(std::vector<std::uint16_t>{1, 0, 2, 1, 1});
  bool partial = false;
  for (float c : cov) partial = partial || (c > 0 && c < 1);
  EXPECT_TRUE(partial);
}

TEST(Render, TabularNoiseFreeIsMixingTimesOnehot) {
  const auto spec = tabular_spec(4, 0.9, 0.0);
  const Renderer r(spec);
  const std::vector<std::uint16_t> g{3, 1, 2, 0};
  const auto x = r.render(g, 123);
  const std::size_t cols = spec.factors.total_values();
  std::vector<double> onehot(cols, 0.0);
  onehot[0 + 3] = onehot[4 + 1] = onehot[8 + 2] = onehot[11 + 0] = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += r.mixing()[i * cols + j] * onehot[j];
    EXPECT_EQ(x[i], static_cast<float>(s));
  }
}

TEST(Render, RejectsOutOfRangeAssignment) {
  const auto spec = tabular_spec();
  EXPECT_THROW(render(spec, std::vector<std::uint16_t>{4, 0, 0, 0}, 1), Error);
  EXPECT_THROW(render(spec, std::vector<std::uint16_t>{0, 0, 0}, 1), ShapeError);
}

TEST(Sample, ConfounderFrequenciesWithinBound) {
  ObservationSpec obs;
  obs.dim = 4;
  const auto spec =
      make_confounded_spec(FactorSpec{{{"a", 2}, {"b", 3}}}, 3, {{{"a"}, 0.8}}, obs, {0.2, 0.5, 0.3});
  const std::size_t n = 4000;
  const auto ds = sample_dataset(spec, n, 17);
  std::vector<double> freq(3, 0.0);
  for (auto c : ds.c) freq[c] += 1.0 / n;
  double tv = 0.0;
  for (std::size_t c = 0; c < 3; ++c) tv += 0.5 * std::abs(freq[c] - spec.confounder_prior[c]);
  EXPECT_LT(tv, 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Sample, SingleConfounderValueGivesIndependentFactors) {
  const auto spec = tabular_spec(1, 0.9);
  const auto ds = sample_dataset(spec, 10000, 1);
  for (std::size_t a = 0; a < ds.n_factors(); ++a)
    for (std::size_t b = a + 1; b < ds.n_factors(); ++b)
      EXPECT_LT(normalized_mi(ds.factor_column(a), ds.factor_column(b), ds.factor_cards[a], ds.factor_cards[b]),
                0.05);
}

TEST(Sample, ForcedPairIsPositivelyCorrelated) {
  const auto spec = image_spec(0.9);
  const std::size_t n = 10000;
  const auto ds = sample_dataset(spec, n, 4);
  const std::size_t hue = 1, shape = 0;
  // Analytic P(hue=red, shape=cube) and marginals from the spec.
  double p_joint = 0, p_h = 0, p_s = 0;
  for (std::size_t c = 0; c < spec.n_confounders(); ++c) {
    const double pc = spec.confounder_prior[c];
    p_joint += pc * spec.conditionals[c][hue][0] * spec.conditionals[c][shape][0];
    p_h += pc * spec.conditionals[c][hue][0];
    p_s += pc * spec.conditionals[c][shape][0];
  }
  const double cov_exact = p_joint - p_h * p_s;
  ASSERT_GT(cov_exact, 0.0);
  double e_joint = 0, e_h = 0, e_s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool h = ds.factor(i, hue) == 0, s = ds.factor(i, shape) == 0;
    e_joint += (h && s) ? 1.0 / n : 0.0;
    e_h += h ? 1.0 / n : 0.0;
    e_s += s ? 1.0 / n : 0.0;
  }
  const double cov_emp = e_joint - e_h * e_s;
  EXPECT_GT(cov_emp, 0.0);
  EXPECT_NEAR(cov_emp, cov_exact, 4.0 * std::sqrt(p_joint / n));
}

TEST(Sample, FixedSeedIdenticalBytes) {
  const auto spec = image_spec();
  EXPECT_EQ(encode_dataset(sample_dataset(spec, 50, 8)), encode_dataset(sample_dataset(spec, 50, 8)));
  EXPECT_NE(encode_dataset(sample_dataset(spec, 50, 8)), encode_dataset(sample_dataset(spec, 50, 9)));
}

TEST(Sample, WithinStratumIndependence) {
  const auto ds = sample_dataset(tabular_spec(4, 0.9), 10000, 21);
  for (std::uint16_t c = 0; c < 4; ++c) {
    const auto s = stratum(ds, c);
    for (std::size_t a = 0; a < s.n_factors(); ++a)
      for (std::size_t b = a + 1; b < s.n_factors(); ++b)
        EXPECT_LT(normalized_mi(s.factor_column(a), s.factor_column(b), s.factor_cards[a], s.factor_cards[b]), 0.05)
            << "c=" << c << " pair " << a << "," << b;
  }
}

TEST(Sample, PooledDependenceExceedsStratified) {
  const auto ds = sample_dataset(tabular_spec(4, 0.7), 10000, 22);
  const std::size_t h = ds.factor_index("hue"), s = ds.factor_index("shape");
  const double pooled = normalized_mi(ds.factor_column(h), ds.factor_column(s), 4, 4);
  double strat = 0.0;
  for (std::uint16_t c = 0; c < 4; ++c) {
    const auto st = stratum(ds, c);
    strat = std::max(strat, normalized_mi(st.factor_column(h), st.factor_column(s), 4, 4));
  }
  EXPECT_GT(pooled, strat);
}

TEST(Split, ZeroSeverityMatchesTarget) {
  const auto [train, target] = shifted_split(tabular_spec(), 0.0, 10000, 10000, 5);
  for (auto c : train.c) ASSERT_EQ(c, 4);
  EXPECT_GT(homogeneity_p(train, target, 0, 1), 0.01);
}

TEST(Split, SeverityControlsCorrelatedFraction) {
  const auto [train, target] = shifted_split(tabular_spec(), 0.4, 5000, 100, 5);
  std::size_t corr = 0;
  for (auto c : train.c) corr += c < 4 ? 1 : 0;
  EXPECT_EQ(corr, 2000u);
  for (auto c : target.c) EXPECT_EQ(c, 4);
  EXPECT_EQ(train.conf_card, 5u);
}

TEST(Split, CramersVMonotoneInSeverity) {
  const auto spec = tabular_spec();
  double prev = -1.0;
  for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto train = shifted_split(spec, s, 10000, 10, 31).first;
    const double v = cramers_v(train.factor_column(0), train.factor_column(1), 4, 4);
    EXPECT_GE(v, prev) << "severity " << s;
    prev = v;
  }
}

TEST(Split, FullSeverityMatchesConfoundedSampling) {
  const auto spec = tabular_spec();
  const auto train = shifted_split(spec, 1.0, 10000, 10, 77).first;
  const auto direct = sample_dataset(spec, 10000, 78);
  EXPECT_GT(homogeneity_p(train, direct, 0, 1), 0.01);
  EXPECT_GT(homogeneity_p(train, direct, 2, 3), 0.01);
}

TEST(Split, RejectsBadSeverity) {
  EXPECT_THROW(shifted_split(tabular_spec(), 1.5, 10, 10, 1), Error);
}

TEST(Labels, MergeRefineConstant) {
  auto ds = shifted_split(tabular_spec(), 0.5, 400, 10, 2).first;
  const auto merged = with_merged_labels(ds, 4, 2);
  EXPECT_EQ(merged.conf_card, 3u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::uint16_t want = ds.c[i] < 4 ? ds.c[i] / 2 : 2;
    EXPECT_EQ(merged.c[i], want);
  }
  const auto refined = with_refined_labels(ds, 3);
  EXPECT_EQ(refined.conf_card, 10u);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(refined.c[i] / 2, ds.c[i]);
  const auto none = with_constant_label(ds);
  EXPECT_EQ(none.conf_card, 1u);
  for (auto c : none.c) EXPECT_EQ(c, 0);
}

TEST(DatasetIo, RoundTripEqualBytes) {
  const auto ds = sample_dataset(image_spec(), 30, 3);
  const auto dir = std::filesystem::temp_directory_path() / "cdisent_ds_roundtrip";
  std::filesystem::remove_all(dir);
  write_dataset(ds, dir, {{"seed", 3}});
  const auto back = read_dataset(dir);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(encode_dataset(back), encode_dataset(ds));
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, TruncatedFileIsAnError) {
  const auto ds = sample_dataset(tabular_spec(), 20, 3);
  const std::string bytes = encode_dataset(ds);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_dataset(bytes.substr(0, cut)), FormatError) << cut;
  const auto dir = std::filesystem::temp_directory_path() / "cdisent_ds_trunc";
  std::filesystem::remove_all(dir);
  write_dataset(ds, dir);
  std::filesystem::resize_file(dir / "data.cdst", bytes.size() - 7);
  EXPECT_THROW(read_dataset(dir), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, VersionBumpIsUnsupported) {
  std::string bytes = encode_dataset(sample_dataset(tabular_spec(), 5, 3));
  bytes[4] = 2;
  try {
    decode_dataset(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version 2"), std::string::npos);
  }
  bytes[0] = 'X';
  EXPECT_THROW(decode_dataset(bytes), FormatError);
}
