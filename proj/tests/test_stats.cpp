// Copyright 2026 The megtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "megtl/error.hpp"
#include "megtl/stats.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace megtl {
namespace {

/// Distinct magnitudes with random signs.
std::vector<double> tie_free_sample(std::mt19937_64& gen, std::size_t n) {
  std::vector<double> mags(n);
  std::iota(mags.begin(), mags.end(), 1.0);
  std::shuffle(mags.begin(), mags.end(), gen);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (gen() & 1 ? 1.0 : -1.0) * (mags[i] * 0.37 + 0.01 * i);
  return d;
}

TEST(WilcoxonTest, ExactMatchesEnumeration) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + gen() % 10;
    const auto d = tie_free_sample(gen, n);
    const auto r = wilcoxon_signed_rank(d);
    ASSERT_TRUE(r.exact);
    EXPECT_EQ(r.p, oracle::wilcoxon_enumerated_p(d)) << "n=" << n;
    EXPECT_EQ(r.w, std::min(r.w_plus, r.w_minus));
    EXPECT_EQ(r.w_plus + r.w_minus, n * (n + 1) / 2.0);
  }
}

TEST(WilcoxonTest, CdfCountMatchesBruteForce) {
  for (std::size_t n = 1; n <= 12; ++n) {
    std::vector<std::uint64_t> hist(n * (n + 1) / 2 + 1, 0);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      std::size_t s = 0;
      for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1U) ? i + 1 : 0;
      ++hist[s];
    }
    std::uint64_t cum = 0;
    for (std::size_t w = 0; w < hist.size(); ++w) {
      cum += hist[w];
      EXPECT_EQ(signed_rank_cdf_count(n, static_cast<double>(w)), cum) << n << " " << w;
    }
  }
}

TEST(WilcoxonTest, DocumentedExamples) {
  const std::vector<double> up = {1, 2, 3, 4, 5};
  const auto a = wilcoxon_signed_rank(up);
  EXPECT_EQ(a.w, 0.0);
  EXPECT_DOUBLE_EQ(a.p, 2.0 / 32.0);

  const std::vector<double> sym = {1, -1};
  EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(sym).p, 1.0);
}

TEST(WilcoxonTest, EighteenSubjectsWSeventeen) {
  // Ranks 1..18 with the negative ranks {17} give W- = 17 = W.
  std::vector<double> d;
  for (int r = 1; r <= 18; ++r) d.push_back(r == 17 ? -r : r);
  const auto res = wilcoxon_signed_rank(d);
  EXPECT_TRUE(res.exact);
  EXPECT_EQ(res.w, 17.0);
  // 207 of the 2^18 sign patterns have W+ <= 17.
  EXPECT_EQ(signed_rank_cdf_count(18, 17), 207u);
  EXPECT_DOUBLE_EQ(res.p, 2.0 * 207.0 / 262144.0);
  // Eighteen subjects with one zero difference: n = 17 and p doubles.
  std::vector<double> z = {0.0};
  for (int r = 1; r <= 17; ++r) z.push_back(r == 17 ? -r : r);
  const auto dropped = wilcoxon_signed_rank(z);
  EXPECT_EQ(dropped.n, 17u);
  EXPECT_EQ(dropped.w, 17.0);
  EXPECT_DOUBLE_EQ(dropped.p, 2.0 * 207.0 / 131072.0);
  // A different split of the same W gives the same p.
  std::vector<double> e;
  for (int r = 1; r <= 18; ++r) e.push_back(r == 8 || r == 9 ? -r : r);
  EXPECT_EQ(wilcoxon_signed_rank(e).p, res.p);
}

TEST(WilcoxonTest, ZerosAreDroppedAndAllZeroIsDegenerate) {
  const std::vector<double> d = {0.0, 1.0, -2.0, 0.0, 3.0};
  const auto r = wilcoxon_signed_rank(d);
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(r.n_zeros_dropped, 2u);
  const std::vector<double> nz = {1.0, -2.0, 3.0};
  EXPECT_EQ(r.p, wilcoxon_signed_rank(nz).p);

  const std::vector<double> z = {0.0, 0.0};
  const auto zr = wilcoxon_signed_rank(z);
  EXPECT_TRUE(zr.degenerate);
  EXPECT_EQ(zr.p, 1.0);
}

// Normal approximation written from the textbook formula.
double approx_oracle(const std::vector<double>& d) {
  std::vector<double> a;
  std::vector<bool> pos;
  for (double x : d) {
    if (x == 0) continue;
    a.push_back(std::abs(x));
    pos.push_back(x > 0);
  }
  const double n = static_cast<double>(a.size());
  double w_plus = 0, tie_term = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double less = 0, equal = 0;
    for (double b : a) {
      less += b < a[i];
      equal += b == a[i];
    }
    const double rank = less + (equal + 1) / 2;
    if (pos[i]) w_plus += rank;
    tie_term += equal * equal - 1;  // summed once per member: t (t^2 - 1) over groups
  }
  const double w_minus = n * (n + 1) / 2 - w_plus;
  const double w = std::min(w_plus, w_minus);
  const double mean = n * (n + 1) / 4;
  const double var = n * (n + 1) * (2 * n + 1) / 24 - tie_term / 48;
  const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

TEST(WilcoxonTest, TiesUseApproximation) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> d(5 + gen() % 30);
    for (auto& x : d) x = static_cast<double>(static_cast<int>(gen() % 9) - 3);
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0; })) continue;
    const auto r = wilcoxon_signed_rank(d);
    std::vector<double> a;
    for (double x : d) {
      if (x != 0) a.push_back(std::abs(x));
    }
    std::sort(a.begin(), a.end());
    const bool ties = std::adjacent_find(a.begin(), a.end()) != a.end();
    if (ties || a.size() > 25) {
      EXPECT_FALSE(r.exact);
      EXPECT_NEAR(r.p, approx_oracle(d), 1e-12) << trial;
    }
  }
}

TEST(WilcoxonTest, ApproximationTracksExactAtTwentyFive) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = tie_free_sample(gen, 25);
    const auto exact = wilcoxon_signed_rank(d, WilcoxonMode::Exact);
    const auto approx = wilcoxon_signed_rank(d, WilcoxonMode::Approximate);
    EXPECT_TRUE(exact.exact);
    EXPECT_FALSE(approx.exact);
    EXPECT_NEAR(exact.p, approx.p, 0.01);
  }
}

TEST(WilcoxonTest, ScaleInvariant) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto d = tie_free_sample(gen, 4 + gen() % 30);
    const double p = wilcoxon_signed_rank(d).p;
    for (auto& x : d) x *= 7.5;
    EXPECT_EQ(wilcoxon_signed_rank(d).p, p);
  }
}

TEST(HolmTest, HandExamples) {
  const std::vector<double> one = {0.02};
  EXPECT_EQ(holm_adjust(one), one);
  const std::vector<double> three = {0.01, 0.04, 0.03};
  const auto adj = holm_adjust(three);
  EXPECT_NEAR(adj[0], 0.03, 1e-15);
  EXPECT_NEAR(adj[1], 0.06, 1e-15);
  EXPECT_NEAR(adj[2], 0.06, 1e-15);
  EXPECT_TRUE(holm_adjust(std::vector<double>{}).empty());
}

TEST(HolmTest, PropertiesOnRandomInputs) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unif;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(1 + gen() % 20);
    for (auto& x : p) x = gen() % 4 == 0 ? 0.05 : unif(gen) * unif(gen);
    const auto adj = holm_adjust(p);
    const auto ref = oracle::holm(p);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t k = 0; k < p.size(); ++k) {
      EXPECT_GE(adj[k], p[k]);
      EXPECT_LE(adj[k], 1.0);
      EXPECT_NEAR(adj[k], ref[k], 1e-15);
      if (k > 0) EXPECT_GE(adj[order[k]], adj[order[k - 1]]);
    }
    // Bonferroni at the smallest p.
    EXPECT_NEAR(adj[order[0]], std::min(1.0, p[order[0]] * static_cast<double>(p.size())), 1e-15);
  }
}

TEST(SignflipTest, Examples) {
  const std::vector<double> zeros(10, 0.0);
  EXPECT_EQ(signflip_permutation(zeros, 1000, 1), 1.0);
  const std::vector<double> ones(18, 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LE(signflip_permutation(ones, 10000, seed), 0.01);
  EXPECT_THROW(signflip_permutation(std::vector<double>{}, 10, 1), DataError);
  EXPECT_THROW(signflip_permutation(ones, 0, 1), InvalidArgument);
}

TEST(SignflipTest, DeterministicAndOrderInvariant) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal(0.3, 1.0);
  std::vector<double> v(18);
  for (auto& x : v) x = normal(gen);
  const double p = signflip_permutation(v, 2000, 77);
  EXPECT_EQ(signflip_permutation(v, 2000, 77), p);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(v.begin(), v.end(), gen);
    EXPECT_EQ(signflip_permutation(v, 2000, 77), p);
  }
  auto neg = v;
  for (auto& x : neg) x = -x;
  EXPECT_NEAR(signflip_permutation(neg, 20000, 5), signflip_permutation(v, 20000, 5), 0.02);
}

TEST(SignflipTest, MatchesExactPermutationDistribution) {
  // n = 8: all 256 sign patterns give the exact p; the Monte-Carlo p converges to it.
  const std::vector<double> v = {0.5, 1.2, -0.3, 0.8, 0.1, -0.7, 1.5, 0.4};
  const double obs = std::abs(std::accumulate(v.begin(), v.end(), 0.0));
  int hits = 0;
  for (int mask = 0; mask < 256; ++mask) {
    double s = 0;
    for (int i = 0; i < 8; ++i) s += (mask >> i & 1) ? v[i] : -v[i];
    hits += std::abs(s) >= obs - 1e-12;
  }
  EXPECT_NEAR(signflip_permutation(v, 100000, 3), hits / 256.0, 0.005);
}

TEST(SignflipTest, NullCalibrationSmall) {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> normal;
  int rejections = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> v(18);
    for (auto& x : v) x = normal(gen);
    rejections += signflip_permutation(v, 1000, static_cast<std::uint64_t>(r)) < 0.05;
  }
  EXPECT_GE(rejections, 2);
  EXPECT_LE(rejections, 20);
}

std::vector<MetricRow> paired_rows(std::size_t subjects, double shift, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.5, 0.8);
  std::vector<MetricRow> rows;
  for (std::size_t s = 0; s < subjects; ++s) {
    for (TaskId tr : kTargetTasks) {
      for (TaskId te : kTargetTasks) {
        MetricRow a;
        a.subject = "sub" + std::to_string(s);
        a.train_task = tr;
        a.test_task = te;
        a.mode = Mode::Scratch;
        a.f1_macro = unif(gen);
        a.balanced_accuracy = unif(gen);
        a.auc_macro = unif(gen);
        MetricRow b = a;
        b.mode = Mode::Transfer;
        b.f1_macro = *a.f1_macro + shift + 0.01 * static_cast<double>(s);
        b.balanced_accuracy = *a.balanced_accuracy + shift;
        b.auc_macro = *a.auc_macro - shift;
        rows.push_back(a);
        rows.push_back(b);
      }
    }
  }
  return rows;
}

TEST(EffectsTest, IdenticalModesGiveZeroImprovements) {
  auto rows = paired_rows(4, 0.0, 1);
  for (auto& r : rows) {
    if (r.mode == Mode::Transfer) r.f1_macro = r.balanced_accuracy = r.auc_macro = 0.6;
    if (r.mode == Mode::Scratch) r.f1_macro = r.balanced_accuracy = r.auc_macro = 0.6;
  }
  const auto e = effect_summary(rows);
  ASSERT_EQ(e.per_subject.size(), 4u * 9 * 3);
  for (const auto& s : e.per_subject) EXPECT_EQ(s.improvement, 0.0);
  EXPECT_EQ(e.unmatched_rows, 0u);
}

TEST(EffectsTest, TwoSubjectExample) {
  std::vector<MetricRow> rows;
  for (int s = 0; s < 2; ++s) {
    MetricRow a;
    a.subject = s == 0 ? "a" : "b";
    a.f1_macro = 0.5;
    MetricRow b = a;
    b.mode = Mode::Transfer;
    b.f1_macro = 0.5 + (s == 0 ? 0.02 : 0.04);
    rows.push_back(a);
    rows.push_back(b);
  }
  MetricRow orphan;
  orphan.subject = "c";
  orphan.f1_macro = 0.4;
  rows.push_back(orphan);
  const auto e = effect_summary(rows);
  EXPECT_EQ(e.unmatched_rows, 1u);
  ASSERT_FALSE(e.conditions.empty());
  const auto it = std::find_if(e.conditions.begin(), e.conditions.end(),
                               [](const ConditionEffect& c) { return c.metric == Metric::F1Macro; });
  ASSERT_NE(it, e.conditions.end());
  EXPECT_NEAR(it->improvement.mean, 0.03, 1e-12);
  EXPECT_NEAR(it->improvement.std, 0.01, 1e-12);
}

TEST(RunStatsTest, RowsHolmFamilyAndOmnibus) {
  const auto rows = paired_rows(8, 0.05, 2);
  const auto rep = run_stats(rows, 2000, 1);
  ASSERT_EQ(rep.rows.size(), 9u * 3 + 3);
  std::vector<double> raw;
  for (std::size_t i = 0; i < 27; ++i) {
    ASSERT_TRUE(rep.rows[i].raw_p.has_value());
    raw.push_back(*rep.rows[i].raw_p);
  }
  const auto adj = holm_adjust(raw);
  for (std::size_t i = 0; i < 27; ++i) EXPECT_EQ(*rep.rows[i].holm_p, adj[i]);
  EXPECT_EQ(rep.rows[0].condition, "listen_to_listen");
  const auto& omni = rep.rows.back();
  EXPECT_EQ(omni.condition, "omnibus_all");
  EXPECT_EQ(omni.metric, "signflip:iters=2000");
  EXPECT_EQ(omni.n, 8u);
  // f1 +0.05 + 0.01 s, bacc +0.05, auc -0.05: subject mean is (0.05 + 0.01 s) / 3.
  EXPECT_NEAR(omni.mean_improvement, (0.05 + 0.035) / 3.0, 1e-12);
  EXPECT_EQ(rep.rows[27].condition, "omnibus_intask");
  EXPECT_EQ(rep.rows[28].condition, "omnibus_crosstask");

  const auto csv = stats_csv(rep);
  EXPECT_EQ(csv.substr(0, kStatsHeader.size()), kStatsHeader);
  EXPECT_NE(csv.find("\nomnibus_all,signflip:iters=2000,8,"), std::string::npos);
  EXPECT_EQ(stats_csv(run_stats(rows, 2000, 1)), csv);
}

TEST(RunStatsTest, WritesSideTables) {
  testutil::TempDir dir;
  const auto rows = paired_rows(3, 0.02, 4);
  const auto rep = run_stats(rows, 500, 1);
  write_stats_outputs(rows, rep, dir / "stats.csv");
  for (const char* f : {"stats.csv", "stats_effects.csv", "stats_subjects.csv", "stats_asymmetry.csv",
                        "stats_tables.md"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_NE(testutil::slurp(dir / "stats_tables.md").find("Transfer Learning"), std::string::npos);
  EXPECT_THROW(run_stats(std::vector<MetricRow>{}, 10, 1), DataError);
}

TEST(AsymmetryTest, PairsDirections) {
  const auto rows = paired_rows(2, 0.0, 6);
  const auto e = effect_summary(rows);
  EXPECT_EQ(e.asymmetry.size(), 2u * 3);
  for (const auto& a : e.asymmetry) {
    EXPECT_EQ(a.n_subjects, 2u);
    double ab = 0, ba = 0;
    for (const auto& r : rows) {
      if (r.mode != a.mode) continue;
      if (r.train_task == a.a && r.test_task == a.b) ab += *r.f1_macro / 2;
      if (r.train_task == a.b && r.test_task == a.a) ba += *r.f1_macro / 2;
    }
    EXPECT_NEAR(a.f1_a_to_b, ab, 1e-12);
    EXPECT_NEAR(a.f1_b_to_a, ba, 1e-12);
  }
}

}  // namespace
}  // namespace megtl
