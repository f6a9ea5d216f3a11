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


#include "megtl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "csv.hpp"
#include "megtl/error.hpp"
#include "megtl/rng.hpp"

namespace megtl {

std::uint64_t signed_rank_cdf_count(std::size_t n, double w) {
  if (n > 62) throw InvalidArgument("exact signed-rank distribution supports n <= 62");
  if (w < 0.0) return 0;
  const std::size_t max_sum = n * (n + 1) / 2;
  // counts[s] = number of subsets of {1..k} with sum s.
  std::vector<std::uint64_t> counts(max_sum + 1, 0);
  counts[0] = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    for (std::size_t s = k * (k + 1) / 2; s >= k; --s) counts[s] += counts[s - k];
  }
  const auto limit = static_cast<std::size_t>(std::min(std::floor(w), static_cast<double>(max_sum)));
  std::uint64_t total = 0;
  for (std::size_t s = 0; s <= limit; ++s) total += counts[s];
  return total;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> d, WilcoxonMode mode) {
  if (d.empty()) throw DataError("Wilcoxon test on an empty sample");
  WilcoxonResult r;
  std::vector<double> nz;
  for (double v : d) {
    if (!std::isfinite(v)) throw InvalidArgument("Wilcoxon input must be finite");
    if (v == 0.0) ++r.n_zeros_dropped;
    else nz.push_back(v);
  }
  r.n = nz.size();
  if (r.n == 0) {
    r.degenerate = true;
    r.p = 1.0;
    return r;
  }

  std::vector<std::size_t> order(r.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(nz[a]) < std::abs(nz[b]); });
  std::vector<double> rank(r.n);
  bool ties = false;
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  for (std::size_t i = 0; i < r.n;) {
    std::size_t j = i;
    while (j < r.n && std::abs(nz[order[j]]) == std::abs(nz[order[i]])) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    const double t = static_cast<double>(j - i);
    if (j - i > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    i = j;
  }
  for (std::size_t i = 0; i < r.n; ++i) (nz[i] > 0 ? r.w_plus : r.w_minus) += rank[i];
  r.w = std::min(r.w_plus, r.w_minus);

  bool exact = false;
  switch (mode) {
    case WilcoxonMode::Auto: exact = !ties && r.n <= 25; break;
    case WilcoxonMode::Exact:
      if (ties) throw InvalidArgument("exact Wilcoxon distribution requires tie-free |d|");
      exact = true;
      break;
    case WilcoxonMode::Approximate: exact = false; break;
  }
  r.exact = exact;
  if (exact) {
    const double count = static_cast<double>(signed_rank_cdf_count(r.n, r.w));
    r.p = std::min(1.0, 2.0 * count / std::ldexp(1.0, static_cast<int>(r.n)));
  } else {
    const double n = static_cast<double>(r.n);
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
      r.p = 1.0;
    } else {
      const double z = std::max(0.0, std::abs(r.w - mean) - 0.5) / std::sqrt(var);
      r.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    }
  }
  return r;
}

std::vector<double> holm_adjust(std::span<const double> pvals) {
  const std::size_t m = pvals.size();
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p-values must lie in [0,1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double v = std::min(1.0, static_cast<double>(m - k) * pvals[order[k]]);
    running = std::max(running, v);
    adj[order[k]] = running;
  }
  return adj;
}

double signflip_permutation(std::span<const double> values, std::size_t iters, std::uint64_t seed) {
  if (values.empty()) throw DataError("sign-flip test on an empty sample");
  if (iters < 1) throw InvalidArgument("sign-flip test needs iters >= 1");
  // Sign bits attach to sorted positions, so the p-value does not depend on
  // the order the subjects were listed in.
  std::vector<double> v(values.begin(), values.end());
  double observed = 0.0, scale = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidArgument("sign-flip input must be finite");
    observed += x;
    scale += std::abs(x);
  }
  std::sort(v.begin(), v.end());
  // Sums stand in for means (same n); the slack absorbs summation-order rounding.
  const double target = std::abs(observed) - 1e-12 * scale;
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t it = 0; it < iters; ++it) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i % 64 == 0) bits = rng.next_u64();
      s += ((bits >> (i % 64)) & 1U) ? v[i] : -v[i];
    }
    if (std::abs(s) >= target) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(iters + 1);
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::F1Macro: return "f1_macro";
    case Metric::BalancedAccuracy: return "balanced_accuracy";
    case Metric::AucMacro: return "auc_macro";
  }
  return "unknown";
}

std::optional<double> metric_value(const MetricRow& r, Metric m) {
  switch (m) {
    case Metric::F1Macro: return r.f1_macro;
    case Metric::BalancedAccuracy: return r.balanced_accuracy;
    case Metric::AucMacro: return r.auc_macro;
  }
  return std::nullopt;
}

std::string condition_id(TaskId train_task, TaskId test_task) {
  return std::string(task_name(train_task)) + "_to_" + std::string(task_name(test_task));
}

namespace {

using CellKey = std::tuple<std::string, TaskId, TaskId>;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

EffectSummary effect_summary(std::span<const MetricRow> rows) {
  std::map<CellKey, const MetricRow*> scratch, transfer;
  for (const auto& r : rows) {
    auto& dst = r.mode == Mode::Scratch ? scratch : transfer;
    dst[{r.subject, r.train_task, r.test_task}] = &r;
  }
  EffectSummary e;
  for (const auto& [key, s] : scratch) {
    if (!transfer.count(key)) ++e.unmatched_rows;
  }
  for (const auto& [key, t] : transfer) {
    if (!scratch.count(key)) ++e.unmatched_rows;
  }

  for (TaskId tr : kTargetTasks) {
    for (TaskId te : kTargetTasks) {
      for (Metric m : kMetrics) {
        std::vector<double> imps;
        for (const auto& [key, s] : scratch) {
          if (std::get<1>(key) != tr || std::get<2>(key) != te) continue;
          const auto it = transfer.find(key);
          if (it == transfer.end()) continue;
          const auto a = metric_value(*s, m), b = metric_value(*it->second, m);
          if (!a || !b) continue;
          e.per_subject.push_back({std::get<0>(key), tr, te, m, *b - *a});
          imps.push_back(*b - *a);
        }
        e.conditions.push_back({tr, te, m, summarize(imps)});
      }
    }
  }

  for (Mode mode : {Mode::Scratch, Mode::Transfer}) {
    const auto& src = mode == Mode::Scratch ? scratch : transfer;
    for (std::size_t i = 0; i < kTargetTasks.size(); ++i) {
      for (std::size_t j = i + 1; j < kTargetTasks.size(); ++j) {
        const TaskId a = kTargetTasks[i], b = kTargetTasks[j];
        std::vector<double> ab, ba;
        std::set<std::string> subjects;
        for (const auto& [key, r] : src) subjects.insert(std::get<0>(key));
        for (const auto& s : subjects) {
          const auto x = src.find({s, a, b});
          const auto y = src.find({s, b, a});
          if (x == src.end() || y == src.end() || !x->second->f1_macro || !y->second->f1_macro) continue;
          ab.push_back(*x->second->f1_macro);
          ba.push_back(*y->second->f1_macro);
        }
        e.asymmetry.push_back({mode, a, b, mean_of(ab), mean_of(ba), ab.size()});
      }
    }
  }
  return e;
}

StatsReport run_stats(std::span<const MetricRow> rows, std::size_t iters, std::uint64_t seed) {
  StatsReport rep;
  rep.effects = effect_summary(rows);
  if (rep.effects.per_subject.empty()) throw DataError("no matched scratch/transfer pairs");

  std::vector<std::size_t> tested;  // rows that enter the Holm family
  for (const auto& c : rep.effects.conditions) {
    StatRow row;
    row.condition = condition_id(c.train_task, c.test_task);
    row.metric = metric_name(c.metric);
    row.n = c.improvement.n;
    row.mean_improvement = c.improvement.mean;
    row.std_improvement = c.improvement.std;
    if (row.n > 0) {
      std::vector<double> d;
      for (const auto& s : rep.effects.per_subject) {
        if (s.train_task == c.train_task && s.test_task == c.test_task && s.metric == c.metric) {
          d.push_back(s.improvement);
        }
      }
      const auto w = wilcoxon_signed_rank(d);
      row.w = w.w;
      row.raw_p = w.p;
      tested.push_back(rep.rows.size());
    }
    rep.rows.push_back(std::move(row));
  }
  std::vector<double> raw;
  for (auto i : tested) raw.push_back(*rep.rows[i].raw_p);
  const auto adj = holm_adjust(raw);
  for (std::size_t k = 0; k < tested.size(); ++k) rep.rows[tested[k]].holm_p = adj[k];

  struct Scope {
    const char* name;
    int kind;  // 0 in-task, 1 cross-task, 2 all
  };
  for (const Scope scope : {Scope{"omnibus_intask", 0}, Scope{"omnibus_crosstask", 1}, Scope{"omnibus_all", 2}}) {
    std::map<std::string, std::vector<double>> by_subject;
    for (const auto& s : rep.effects.per_subject) {
      const bool in_task = s.train_task == s.test_task;
      if ((scope.kind == 0 && !in_task) || (scope.kind == 1 && in_task)) continue;
      by_subject[s.subject].push_back(s.improvement);
    }
    std::vector<double> agg;
    for (const auto& [subject, v] : by_subject) agg.push_back(mean_of(v));
    StatRow row;
    row.condition = scope.name;
    row.metric = "signflip:iters=" + std::to_string(iters);
    row.n = agg.size();
    const auto sum = summarize(agg);
    row.mean_improvement = sum.mean;
    row.std_improvement = sum.std;
    if (!agg.empty()) {
      row.w = sum.mean;
      row.raw_p = signflip_permutation(agg, iters, mix64(seed, stable_hash(scope.name)));
      row.holm_p = row.raw_p;
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? detail::format_fixed(*v, 6) : "NA"; }

}  // namespace

std::string stats_csv(const StatsReport& report) {
  std::string out(kStatsHeader);
  out += '\n';
  for (const auto& r : report.rows) {
    out += r.condition + ',' + r.metric + ',' + std::to_string(r.n) + ',' + opt(r.w) + ',' + opt(r.raw_p) + ',' +
           opt(r.holm_p) + ',' + detail::format_fixed(r.mean_improvement, 6) + ',' +
           detail::format_fixed(r.std_improvement, 6) + '\n';
  }
  return out;
}

std::string effects_csv(const EffectSummary& e) {
  std::string out = "condition,metric,n,mean_improvement,std_improvement_population\n";
  for (const auto& c : e.conditions) {
    out += condition_id(c.train_task, c.test_task) + ',' + std::string(metric_name(c.metric)) + ',' +
           std::to_string(c.improvement.n) + ',' + detail::format_fixed(c.improvement.mean, 6) + ',' +
           detail::format_fixed(c.improvement.std, 6) + '\n';
  }
  return out;
}

std::string subject_improvements_csv(const EffectSummary& e) {
  std::string out = "subject,condition,metric,improvement\n";
  for (const auto& s : e.per_subject) {
    out += s.subject + ',' + condition_id(s.train_task, s.test_task) + ',' + std::string(metric_name(s.metric)) +
           ',' + detail::format_fixed(s.improvement, 6) + '\n';
  }
  return out;
}

std::string asymmetry_csv(const EffectSummary& e) {
  std::string out = "mode,task_a,task_b,n,f1_a_to_b,f1_b_to_a,asymmetry\n";
  for (const auto& a : e.asymmetry) {
    out += std::string(mode_name(a.mode)) + ',' + std::string(task_name(a.a)) + ',' + std::string(task_name(a.b)) +
           ',' + std::to_string(a.n_subjects) + ',' + detail::format_fixed(a.f1_a_to_b, 6) + ',' +
           detail::format_fixed(a.f1_b_to_a, 6) + ',' + detail::format_fixed(a.f1_a_to_b - a.f1_b_to_a, 6) + '\n';
  }
  return out;
}

std::string report_markdown(std::span<const MetricRow> rows, const StatsReport& report) {
  std::ostringstream out;
  out << "# Results\n\nValues are mean ± population std across subjects, in %. "
         "Transfer cells above the scratch mean are bold.\n\n## In-task\n\n"
      << in_task_table(rows) << "\n## Cross-task\n\n" << cross_task_table(rows)
      << "\n## Improvement (transfer - scratch)\n\n"
      << "| Condition | Metric | n | Mean (%) | Std (%) | W | p | Holm p |\n"
      << "|---|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : report.rows) {
    const std::string mean = detail::format_fixed(100.0 * r.mean_improvement, 2);
    out << "| " << r.condition << " | " << r.metric << " | " << r.n << " | "
        << (r.mean_improvement > 0.0 ? "**" + mean + "**" : mean) << " | "
        << detail::format_fixed(100.0 * r.std_improvement, 2) << " | " << opt(r.w) << " | " << opt(r.raw_p)
        << " | " << opt(r.holm_p) << " |\n";
  }
  return out.str();
}

void write_stats_outputs(std::span<const MetricRow> rows, const StatsReport& report,
                         const std::filesystem::path& out_csv) {
  const auto dir = out_csv.parent_path();
  const auto stem = out_csv.stem().string();
  detail::write_text(out_csv, stats_csv(report));
  detail::write_text(dir / (stem + "_effects.csv"), effects_csv(report.effects));
  detail::write_text(dir / (stem + "_subjects.csv"), subject_improvements_csv(report.effects));
  detail::write_text(dir / (stem + "_asymmetry.csv"), asymmetry_csv(report.effects));
  detail::write_text(dir / (stem + "_tables.md"), report_markdown(rows, report));
}

}  // namespace megtl
