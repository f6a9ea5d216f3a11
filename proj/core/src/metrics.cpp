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


#include "megtl/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "megtl/error.hpp"

namespace megtl {

std::vector<std::uint8_t> binarize(std::span<const float> soft_labels) {
  std::vector<std::uint8_t> out(soft_labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = soft_labels[i] >= 0.5f ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> threshold(std::span<const float> probs, double t) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(probs[i]) >= t ? 1 : 0;
  return out;
}

namespace {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truth) {
  if (preds.size() != truth.size()) throw InvalidArgument("prediction and truth lengths differ");
  if (preds.empty()) throw InvalidArgument("metrics need at least one example");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0, y = truth[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double f1_macro(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truth) {
  const auto c = confusion(preds, truth);
  return 0.5 * (f1(c.tp, c.fp, c.fn) + f1(c.tn, c.fn, c.fp));
}

double balanced_accuracy(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truth) {
  const auto c = confusion(preds, truth);
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) throw DataError("balanced accuracy needs both classes in truth");
  const double rec_pos = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double rec_neg = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * (rec_pos + rec_neg);
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw InvalidArgument("score and truth lengths differ");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto y : truth) n_pos += y != 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC needs both classes in truth");
  for (double s : scores) {
    if (std::isnan(s)) throw InvalidArgument("NaN score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps average ranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_avg_rank = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] != 0) twice_rank_sum += twice_avg_rank;
    }
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_macro(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  const double speech = auc(scores, truth);
  std::vector<double> neg(scores.size());
  std::vector<std::uint8_t> flipped(truth.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    neg[i] = -scores[i];
    flipped[i] = truth[i] != 0 ? 0 : 1;
  }
  const double silence = auc(neg, flipped);
  return 0.5 * (speech + silence);
}

std::string_view mode_name(Mode m) { return m == Mode::Scratch ? "scratch" : "transfer"; }

std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "scratch") return Mode::Scratch;
  if (s == "transfer") return Mode::Transfer;
  return std::nullopt;
}

MetricRow score(std::span<const float> probs, std::span<const float> soft_labels) {
  if (probs.size() != soft_labels.size()) throw InvalidArgument("probability and label lengths differ");
  const auto truth = binarize(soft_labels);
  const auto preds = threshold(probs);
  MetricRow row;
  row.f1_macro = f1_macro(preds, truth);
  const std::size_t n_pos = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
  if (n_pos > 0 && n_pos < truth.size()) {
    row.balanced_accuracy = balanced_accuracy(preds, truth);
    const std::vector<double> scores(probs.begin(), probs.end());
    row.auc_macro = auc_macro(scores, truth);
  }
  return row;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? detail::format_fixed(*v, 6) : "NA"; }

std::optional<double> parse_cell(const std::string& s, const std::string& origin) {
  if (s == "NA") return std::nullopt;
  const double v = detail::parse_double(s, origin);
  if (v < 0.0 || v > 1.0) {
    throw FormatError(FormatError::Kind::Malformed, origin + ": metric outside [0,1]");
  }
  return v;
}

}  // namespace

std::string results_csv(std::span<const MetricRow> rows) {
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.subject + ',' + std::string(task_name(r.train_task)) + ',' + std::string(task_name(r.test_task)) +
           ',' + std::string(mode_name(r.mode)) + ',' + cell(r.f1_macro) + ',' + cell(r.balanced_accuracy) +
           ',' + cell(r.auc_macro) + '\n';
  }
  return out;
}

void write_results_csv(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  detail::write_text(path, results_csv(rows));
}

std::vector<MetricRow> parse_results_csv(std::string_view text, const std::string& origin) {
  const auto lines = detail::text_lines(text);
  if (lines.empty() || lines.front() != kResultsHeader) {
    throw FormatError(FormatError::Kind::Malformed, origin + ": missing or wrong results header");
  }
  std::vector<MetricRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = origin + ":" + std::to_string(i + 1);
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 7) throw FormatError(FormatError::Kind::Malformed, where + ": expected 7 fields");
    MetricRow r;
    r.subject = f[0];
    const auto tr = parse_task(f[1]);
    const auto te = parse_task(f[2]);
    const auto m = parse_mode(f[3]);
    if (!tr || !te || !m) throw FormatError(FormatError::Kind::Malformed, where + ": bad task or mode");
    r.train_task = *tr;
    r.test_task = *te;
    r.mode = *m;
    r.f1_macro = parse_cell(f[4], where);
    r.balanced_accuracy = parse_cell(f[5], where);
    r.auc_macro = parse_cell(f[6], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricRow> read_results_csv(const std::filesystem::path& path) {
  return parse_results_csv(detail::read_text(path), path.string());
}

SummaryCell summarize(std::span<const double> values) {
  SummaryCell c;
  c.n = values.size();
  if (c.n == 0) return c;
  double sum = 0.0;
  for (double v : values) sum += v;
  c.mean = sum / static_cast<double>(c.n);
  double sq = 0.0;
  for (double v : values) sq += (v - c.mean) * (v - c.mean);
  c.std = std::sqrt(sq / static_cast<double>(c.n));
  return c;
}

std::string condition_label(TaskId train_task, TaskId test_task) {
  return std::string(task_short_name(train_task)) + " to " + std::string(task_short_name(test_task));
}

namespace {

using MetricGetter = std::optional<double> MetricRow::*;
constexpr std::array<MetricGetter, 3> kTableMetrics = {&MetricRow::balanced_accuracy, &MetricRow::f1_macro,
                                                       &MetricRow::auc_macro};

SummaryCell cell_summary(std::span<const MetricRow> rows, TaskId tr, TaskId te, Mode mode, MetricGetter g) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.train_task == tr && r.test_task == te && r.mode == mode && (r.*g)) v.push_back(*(r.*g));
  }
  return summarize(v);
}

std::string pct(const SummaryCell& c) {
  if (c.n == 0) return "NA";
  return detail::format_fixed(100.0 * c.mean, 1) + " ± " + detail::format_fixed(100.0 * c.std, 1);
}

// Transfer cells are bold when their mean exceeds the scratch mean.
std::string table_cell(std::span<const MetricRow> rows, TaskId tr, TaskId te, Mode mode, MetricGetter g) {
  const auto c = cell_summary(rows, tr, te, mode, g);
  std::string s = pct(c);
  if (mode == Mode::Transfer && c.n > 0) {
    const auto base = cell_summary(rows, tr, te, Mode::Scratch, g);
    if (base.n > 0 && c.mean > base.mean) s = "**" + s + "**";
  }
  return s;
}

constexpr std::string_view kMetricColumns = "Accu. (%) | F1 (%) | AUC (%) |";

}  // namespace

std::string in_task_table(std::span<const MetricRow> rows) {
  std::ostringstream out;
  out << "| Mode | Task | " << kMetricColumns << "\n|---|---|---:|---:|---:|\n";
  for (Mode mode : {Mode::Scratch, Mode::Transfer}) {
    for (TaskId t : kTargetTasks) {
      out << "| " << (mode == Mode::Scratch ? "Scratch (baseline)" : "Transfer Learning") << " | "
          << task_name(t) << " |";
      for (auto g : kTableMetrics) out << ' ' << table_cell(rows, t, t, mode, g) << " |";
      out << '\n';
    }
  }
  return out.str();
}

std::string cross_task_table(std::span<const MetricRow> rows) {
  std::ostringstream out;
  out << "| Mode | Train → Test | " << kMetricColumns << "\n|---|---|---:|---:|---:|\n";
  for (Mode mode : {Mode::Scratch, Mode::Transfer}) {
    for (TaskId tr : kTargetTasks) {
      for (TaskId te : kTargetTasks) {
        if (tr == te) continue;
        out << "| " << mode_name(mode) << " | " << condition_label(tr, te) << " |";
        for (auto g : kTableMetrics) out << ' ' << table_cell(rows, tr, te, mode, g) << " |";
        out << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace megtl
