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


// Paired nonparametric statistics over per-subject improvements
// (transfer minus scratch).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "megtl/metrics.hpp"

namespace megtl {

enum class WilcoxonMode { Auto, Exact, Approximate };

struct WilcoxonResult {
  double w = 0.0;        // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p = 1.0;        // two-sided
  std::size_t n = 0;     // after dropping zeros
  std::size_t n_zeros_dropped = 0;
  bool exact = false;
  bool degenerate = false;  // every difference was zero
};

/// Wilcoxon signed-rank test. Zeros are dropped, |d| ties get average ranks.
/// Auto uses the exact null distribution when n <= 25 and |d| has no ties,
/// otherwise the tie-corrected normal approximation with continuity
/// correction. p = min(1, 2 P(W+ <= W)).
WilcoxonResult wilcoxon_signed_rank(std::span<const double> d, WilcoxonMode mode = WilcoxonMode::Auto);

/// Number of the 2^n sign assignments of ranks 1..n whose positive rank sum
/// is <= w. Exact in 64 bits for n <= 62.
std::uint64_t signed_rank_cdf_count(std::size_t n, double w);

/// Holm step-down adjustment, returned in input order.
std::vector<double> holm_adjust(std::span<const double> pvals);

/// Two-sided sign-flip permutation test on the mean:
/// p = (#{|mean(flipped)| >= |mean(values)|} + 1) / (iters + 1). Signs are drawn
/// for the sorted values, so the result ignores input order.
double signflip_permutation(std::span<const double> values, std::size_t iters, std::uint64_t seed);

inline constexpr std::size_t kSignflipIters = 10000;

enum class Metric { F1Macro, BalancedAccuracy, AucMacro };
inline constexpr Metric kMetrics[] = {Metric::F1Macro, Metric::BalancedAccuracy, Metric::AucMacro};
std::string_view metric_name(Metric m);
std::optional<double> metric_value(const MetricRow& r, Metric m);

/// "listen_to_playback" style identifier for a train/test cell.
std::string condition_id(TaskId train_task, TaskId test_task);

struct SubjectImprovement {
  std::string subject;
  TaskId train_task;
  TaskId test_task;
  Metric metric;
  double improvement;  // transfer - scratch
};

struct ConditionEffect {
  TaskId train_task;
  TaskId test_task;
  Metric metric;
  SummaryCell improvement;  // population std
};

/// Per-mode mean F1 of a->b against b->a for each unordered task pair.
struct AsymmetryRow {
  Mode mode;
  TaskId a;
  TaskId b;
  double f1_a_to_b = 0.0;
  double f1_b_to_a = 0.0;
  std::size_t n_subjects = 0;  // subjects with both directions
};

struct EffectSummary {
  std::vector<SubjectImprovement> per_subject;
  std::vector<ConditionEffect> conditions;
  std::vector<AsymmetryRow> asymmetry;
  std::size_t unmatched_rows = 0;
};

/// Pairs rows by (subject, train_task, test_task) across modes. Rows without
/// a partner, and metric cells missing in either mode, are dropped.
EffectSummary effect_summary(std::span<const MetricRow> rows);

struct StatRow {
  std::string condition;
  std::string metric;
  std::size_t n = 0;
  std::optional<double> w;  // signflip rows carry the observed mean here
  std::optional<double> raw_p;
  std::optional<double> holm_p;
  double mean_improvement = 0.0;
  double std_improvement = 0.0;
};

struct StatsReport {
  std::vector<StatRow> rows;  // Wilcoxon rows, then omnibus rows
  EffectSummary effects;
};

/// Wilcoxon per (condition, metric), Holm over every Wilcoxon row in the
/// report, then sign-flip omnibus lines for in-task, cross-task and all
/// cells. The omnibus value of a subject is the mean of its improvements.
StatsReport run_stats(std::span<const MetricRow> rows, std::size_t iters, std::uint64_t seed);

inline constexpr std::string_view kStatsHeader =
    "condition,metric,n,W,raw_p,holm_p,mean_improvement,std_improvement";

std::string stats_csv(const StatsReport& report);
/// condition,metric,n,mean_improvement,std_improvement_population
std::string effects_csv(const EffectSummary& e);
/// subject,condition,metric,improvement
std::string subject_improvements_csv(const EffectSummary& e);
/// mode,task_a,task_b,n,f1_a_to_b,f1_b_to_a,asymmetry
std::string asymmetry_csv(const EffectSummary& e);
/// In-task table, cross-task table and improvement table in markdown.
std::string report_markdown(std::span<const MetricRow> rows, const StatsReport& report);

/// Writes `<out>` (stats CSV) plus `<stem>_effects.csv`, `<stem>_subjects.csv`,
/// `<stem>_asymmetry.csv` and `<stem>_tables.md` next to it.
void write_stats_outputs(std::span<const MetricRow> rows, const StatsReport& report,
                         const std::filesystem::path& out_csv);

}  // namespace megtl
