#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "cdisent/core/random.hpp"
#include "cdisent/scm/dsep.hpp"
#include "cdisent/scm/random_scm.hpp"
#include "cdisent/scm/scm.hpp"
#include "cdisent/scm/scm_json.hpp"

using namespace cdisent;
using namespace cdisent::scm;

namespace {

DiscreteSCM confounded_pair(double effect) {
  // C -> Z1, C -> Z2, all binary. Each child's rows differ by `effect` in TV.
  const double a = 0.5 + effect / 2, b = 0.5 - effect / 2;
  return DiscreteSCM({{"C", 2, Role::Confounder}, {"Z1", 2, Role::Factor}, {"Z2", 2, Role::Factor}},
                     {{}, {0}, {0}}, {{0.4, 0.6}, {a, b, b, a}, {a, b, b, a}});
}

std::vector<double> random_rows(Rng& rng, std::size_t rows, std::size_t k) {
  std::vector<double> out;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row(k);
    double s = 0.0;
    for (auto& v : row) s += (v = 0.1 + rng.uniform());
    for (auto& v : row) out.push_back(v / s);
  }
  return out;
}

}  // namespace

TEST(Joint, SingleFairBinary) {
  DiscreteSCM s({{"A", 2}}, {{}}, {{0.5, 0.5}});
  const auto t = joint(s);
  EXPECT_EQ(t.p, (std::vector<double>{0.5, 0.5}));
}

TEST(Joint, TwoIndependentFairBinaries) {
  DiscreteSCM s({{"A", 2}, {"B", 2}}, {{}, {}}, {{0.5, 0.5}, {0.5, 0.5}});
  for (double v : joint(s).p) EXPECT_EQ(v, 0.25);
}

TEST(Joint, ChainMatchesEnumeration) {
  // A -> B -> C with hand-set tables; oracle sums explicit path products.
  const std::vector<double> pa{0.3, 0.7};
  const std::vector<double> pb{0.9, 0.1, 0.2, 0.8};
  const std::vector<double> pc{0.6, 0.3, 0.1, 0.25, 0.25, 0.5};
  DiscreteSCM s({{"A", 2}, {"B", 2}, {"C", 3}}, {{}, {0}, {1}}, {pa, pb, pc});
  const auto t = joint(s);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        EXPECT_NEAR(t.at({a, b, c}), pa[a] * pb[a * 2 + b] * pc[b * 3 + c], 1e-16);
  EXPECT_LT(t.normalization_error(), 1e-12);
}

TEST(Joint, SizeCapEnforced) {
  // 8 variables with 6 states is 1.68M cells.
  std::vector<Variable> vars;
  std::vector<std::vector<std::size_t>> parents(8);
  std::vector<std::vector<double>> cpts;
  for (int i = 0; i < 8; ++i) {
    vars.push_back({"V" + std::to_string(i), 6});
    cpts.push_back(std::vector<double>(6, 1.0 / 6.0));
  }
  DiscreteSCM s(vars, parents, cpts);
  EXPECT_THROW(joint(s), Error);
}

TEST(Scm, ValidationRejectsBadModels) {
  // cycle
  EXPECT_THROW(DiscreteSCM({{"A", 2}, {"B", 2}}, {{1}, {0}}, {{.5, .5, .5, .5}, {.5, .5, .5, .5}}), Error);
  // row not normalized
  EXPECT_THROW(DiscreteSCM({{"A", 2}}, {{}}, {{0.5, 0.6}}), Error);
  // factor causing factor
  EXPECT_THROW(DiscreteSCM({{"Z1", 2, Role::Factor}, {"Z2", 2, Role::Factor}}, {{}, {0}},
                           {{.5, .5}, {.5, .5, .5, .5}}),
               Error);
  // factor parent of a confounder
  EXPECT_THROW(DiscreteSCM({{"Z1", 2, Role::Factor}, {"C", 2, Role::Confounder}}, {{}, {0}},
                           {{.5, .5}, {.5, .5, .5, .5}}),
               Error);
  // too many states
  EXPECT_THROW(DiscreteSCM({{"A", 7}}, {{}}, {std::vector<double>(7, 1.0 / 7)}), Error);
  // duplicate names
  EXPECT_THROW(DiscreteSCM({{"A", 2}, {"A", 2}}, {{}, {}}, {{.5, .5}, {.5, .5}}), Error);
}

TEST(Intervene, RootEqualsConditioning) {
  const auto s = confounded_pair(0.4);
  const auto j = joint(s);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto doc = interventional_dist(s, "Z1", {{"C", c}});
    const auto cond = conditional(j, 1, {0});
    for (std::size_t z = 0; z < 2; ++z) EXPECT_NEAR(doc.p[z], cond.at({c, z}), 1e-15);
  }
}

TEST(Intervene, InterventionIsDeterministic) {
  const auto s = intervene(confounded_pair(0.4), {{"Z1", 1}});
  const auto m = marginal(joint(s), {1});
  EXPECT_EQ(m.p[0], 0.0);
  EXPECT_EQ(m.p[1], 1.0);
  EXPECT_TRUE(s.parents(1).empty());
}

TEST(Intervene, Idempotent) {
  const auto s = confounded_pair(0.3);
  const auto once = intervene(s, {{"Z1", 0}});
  EXPECT_EQ(intervene(once, {{"Z1", 0}}), once);
}

TEST(Intervene, UnknownVariableAndRange) {
  const auto s = confounded_pair(0.3);
  EXPECT_THROW(intervene(s, {{"Q", 0}}), Error);
  EXPECT_THROW(intervene(s, {{"Z1", 2}}), Error);
}

TEST(Intervene, ConfoundedPairDiffersFromConditioning) {
  const auto s = confounded_pair(0.4);
  const auto cond = conditional(joint(s), 2, {1});
  double worst = 0.0;
  for (std::size_t z1 = 0; z1 < 2; ++z1) {
    const auto d = interventional_dist(s, "Z2", {{"Z1", z1}});
    for (std::size_t z2 = 0; z2 < 2; ++z2) worst = std::max(worst, std::abs(d.p[z2] - cond.at({z1, z2})));
  }
  EXPECT_GT(worst, 0.01);
}

TEST(Interventional, NoPathEqualsMarginal) {
  const auto s = confounded_pair(0.5);
  const auto m = marginal(joint(s), {0});
  const auto d = interventional_dist(s, "C", {{"Z1", 1}});
  EXPECT_LT(d.max_abs_diff(m), 1e-15);
}

TEST(Interventional, UnconfoundedEdgeEqualsConditional) {
  DiscreteSCM s({{"Z1", 2}, {"Z2", 3}}, {{}, {0}}, {{0.3, 0.7}, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3}});
  const auto cond = conditional(joint(s), 1, {0});
  for (std::size_t z1 = 0; z1 < 2; ++z1) {
    const auto d = interventional_dist(s, "Z2", {{"Z1", z1}});
    for (std::size_t z2 = 0; z2 < 3; ++z2) EXPECT_NEAR(d.p[z2], cond.at({z1, z2}), 1e-15);
  }
}

TEST(Adjustment, EmptySetOnUnconfoundedModel) {
  DiscreteSCM s({{"Z1", 2}, {"Z2", 2}}, {{}, {0}}, {{0.3, 0.7}, {0.2, 0.8, 0.6, 0.4}});
  EXPECT_LT(confounding_gap(s, 1, 0, {}), 1e-12);
}

TEST(Adjustment, RandomModelsFullAndSupersetSets) {
  RandomScmSpec spec;
  std::size_t with_other = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = random_scm(spec, seed);
    const auto conf = s.with_role(Role::Confounder);
    const auto fac = s.with_role(Role::Factor);
    EXPECT_LT(confounding_gap(s, fac[1], fac[0], conf), 1e-12) << seed;
    const auto others = s.with_role(Role::Other);
    if (!others.empty()) {
      ++with_other;
      auto sup = conf;
      sup.insert(sup.end(), others.begin(), others.end());
      EXPECT_LT(confounding_gap(s, fac[1], fac[0], sup), 1e-12) << seed;
    }
  }
  EXPECT_GT(with_other, 0u);
}

TEST(Adjustment, EmptySetShowsGapOnStrongConfounding) {
  EXPECT_GT(confounding_gap(confounded_pair(0.4), 2, 1, {}), 0.01);
  EXPECT_LT(confounding_gap(confounded_pair(0.4), 2, 1, {0}), 1e-12);
}

TEST(Adjustment, DescendantInSetIsFlaggedAndBiased) {
  // C -> Z1, C -> Z2, Z1 -> D <- Z2: D is a collider and a descendant of Z1.
  const std::vector<double> d_cpt{0.9, 0.1, 0.3, 0.7, 0.2, 0.8, 0.05, 0.95};
  DiscreteSCM s({{"C", 2, Role::Confounder}, {"Z1", 2, Role::Factor}, {"Z2", 2, Role::Factor}, {"D", 2}},
                {{}, {0}, {0}, {1, 2}}, {{0.5, 0.5}, {0.8, 0.2, 0.3, 0.7}, {0.7, 0.3, 0.2, 0.8}, d_cpt});
  EXPECT_EQ(adjustment_violations(s, 1, {0, 3}), (std::vector<std::size_t>{3}));
  EXPECT_TRUE(adjustment_violations(s, 1, {0}).empty());
  EXPECT_LT(confounding_gap(s, 2, 1, {0}), 1e-12);
  EXPECT_GT(confounding_gap(s, 2, 1, {0, 3}), 1e-3);
}

TEST(Adjustment, ZeroCellPolicies) {
  // Z1 is a deterministic copy of C, so (Z1=1, C=0) has zero mass.
  DiscreteSCM s({{"C", 2, Role::Confounder}, {"Z1", 2, Role::Factor}, {"Z2", 2, Role::Factor}}, {{}, {0}, {0}},
                {{0.5, 0.5}, {1, 0, 0, 1}, {0.7, 0.3, 0.4, 0.6}});
  try {
    adjustment_estimate(joint(s), 2, 1, {0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("treatment=0, adjust=(1)"), std::string::npos);
  }
  const auto adj = adjustment_estimate(joint(s), 2, 1, {0}, ZeroCellPolicy::SkipAndRenormalize);
  EXPECT_EQ(adj.skipped.size(), 2u);
  EXPECT_LT(adj.table.normalization_error(), 1e-12);
}

TEST(Adjustment, RejectsOverlappingSets) {
  const auto j = joint(confounded_pair(0.2));
  EXPECT_THROW(adjustment_estimate(j, 2, 1, {1}), Error);
  EXPECT_THROW(adjustment_estimate(j, 1, 1, {}), Error);
}

TEST(RandomScm, FixedSeedIsReproducible) {
  EXPECT_EQ(random_scm({}, 42), random_scm({}, 42));
}

TEST(RandomScm, StrengthBoundAndMostlyConfounded) {
  RandomScmSpec spec;
  int gapped = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = random_scm(spec, seed);
    EXPECT_LE(s.size(), spec.max_vars);
    const auto fac = s.with_role(Role::Factor);
    EXPECT_GE(confounder_strength(s, fac[0]), spec.min_strength - 1e-12);
    EXPECT_GE(confounder_strength(s, fac[1]), spec.min_strength - 1e-12);
    if (confounding_gap(s, fac[1], fac[0], {}) > 0.01) ++gapped;
  }
  EXPECT_GE(gapped, 90);
}

TEST(RandomScm, ZeroStrengthAllowed) {
  RandomScmSpec spec;
  spec.min_strength = 0.0;
  EXPECT_NO_THROW(random_scm(spec, 3));
}

TEST(DSep, TextbookCases) {
  // chain A -> B -> C
  DiscreteSCM chain({{"A", 2}, {"B", 2}, {"C", 2}}, {{}, {0}, {1}},
                    {{.5, .5}, {.5, .5, .5, .5}, {.5, .5, .5, .5}});
  EXPECT_FALSE(d_separated(chain, {0}, {2}, {}));
  EXPECT_TRUE(d_separated(chain, {0}, {2}, {1}));
  // fork A <- B -> C
  DiscreteSCM fork({{"A", 2}, {"B", 2}, {"C", 2}}, {{1}, {}, {1}},
                   {{.5, .5, .5, .5}, {.5, .5}, {.5, .5, .5, .5}});
  EXPECT_FALSE(d_separated(fork, {0}, {2}, {}));
  EXPECT_TRUE(d_separated(fork, {0}, {2}, {1}));
  // collider A -> B <- C, B -> D
  DiscreteSCM coll({{"A", 2}, {"B", 2}, {"C", 2}, {"D", 2}}, {{}, {0, 2}, {}, {1}},
                   {{.5, .5}, std::vector<double>(8, .5), {.5, .5}, {.5, .5, .5, .5}});
  EXPECT_TRUE(d_separated(coll, {0}, {2}, {}));
  EXPECT_FALSE(d_separated(coll, {0}, {2}, {1}));
  EXPECT_FALSE(d_separated(coll, {0}, {2}, {3}));
}

// Rule 1 of do-calculus, checked numerically: in the graph with arrows into
// X removed, if V is d-separated from Y given W and X, then
// P(y | do(x), w, v) = P(y | do(x), w).
TEST(DSep, RuleOneOnEnumeratedGraphs) {
  Rng rng(2024);
  std::size_t checked = 0, separated = 0;
  for (std::size_t n = 3; n <= 4; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t j = 1; j < n; ++j)
      for (std::size_t i = 0; i < j; ++i) slots.emplace_back(i, j);
    for (std::size_t mask = 0; mask < (1u << slots.size()); ++mask) {
      std::vector<std::vector<std::size_t>> parents(n);
      for (std::size_t e = 0; e < slots.size(); ++e)
        if (mask & (1u << e)) parents[slots[e].second].push_back(slots[e].first);
      std::vector<Variable> vars;
      std::vector<std::vector<double>> cpts;
      for (std::size_t v = 0; v < n; ++v) {
        vars.push_back({"V" + std::to_string(v), 2});
        cpts.push_back(random_rows(rng, std::size_t{1} << parents[v].size(), 2));
      }
      const DiscreteSCM s(vars, parents, cpts);
      // Every ordered choice of treatment X, target Y, extra V; W = the rest.
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t v = 0; v < n; ++v) {
            if (x == y || x == v || y == v) continue;
            std::vector<std::size_t> w;
            for (std::size_t u = 0; u < n; ++u)
              if (u != x && u != y && u != v) w.push_back(u);
            const DiscreteSCM cut = intervene(s, {{vars[x].name, 1}});
            std::set<std::size_t> given(w.begin(), w.end());
            given.insert(x);
            ++checked;
            if (!d_separated(cut, {v}, {y}, given)) continue;
            ++separated;
            const auto j = joint(cut);
            const auto without = conditional(j, y, w);
            auto wv = w;
            wv.push_back(v);
            const auto with = conditional(j, y, wv);
            std::vector<std::size_t> a(wv.size() + 1, 0), cards;
            for (std::size_t u : wv) cards.push_back(s.var(u).card);
            cards.push_back(2);
            do {
              std::vector<std::size_t> short_a(a.begin(), a.begin() + static_cast<long>(w.size()));
              short_a.push_back(a.back());
              ASSERT_NEAR(with.at(a), without.at(short_a), 1e-12);
            } while (detail::next_assignment(a, cards));
          }
    }
  }
  EXPECT_GT(separated, 100u);
  EXPECT_GT(checked, separated);
}

TEST(ScmJson, RoundTripsExactly) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = random_scm({}, seed);
    const auto back = from_json(to_json(s));
    EXPECT_EQ(back, s);
  }
  const auto path = std::filesystem::temp_directory_path() / "cdisent_scm_test.json";
  const auto s = random_scm({}, 99);
  write_scm(s, path);
  EXPECT_EQ(read_scm(path), s);
  std::filesystem::remove(path);
}

TEST(ScmJson, MalformedInputIsFormatError) {
  EXPECT_THROW(from_json(nlohmann::json::parse(R"({"variables": 3})")), FormatError);
}

TEST(DistTables, AllNormalize) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_scm({}, seed);
    EXPECT_LT(joint(s).normalization_error(), 1e-12);
    const auto fac = s.with_role(Role::Factor);
    const auto adj = adjustment_estimate(joint(s), fac[1], fac[0], s.with_role(Role::Confounder));
    EXPECT_LT(adj.table.normalization_error(), 1e-12);
  }
}
