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

// Binary speech/silence metrics. Class 1 is speech.
//
// Decision threshold: probability >= 0.5 predicts speech. Soft labels are
// binarized with the same boundary (label >= 0.5 is speech).

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "megtl/signal.hpp"

namespace megtl {

inline constexpr double kDecisionThreshold = 0.5;

std::vector<std::uint8_t> binarize(std::span<const float> soft_labels);
std::vector<std::uint8_t> threshold(std::span<const float> probs, double t = kDecisionThreshold);

/// Mean of per-class F1; a class whose F1 denominator is zero scores 0.
double f1_macro(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truth);
/// Mean of per-class recall. Throws DataError if truth holds a single class.
double balanced_accuracy(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truth);
/// Mann-Whitney AUC of `scores` for the positive class (label 1); ties count
/// one half. Throws DataError if truth holds a single class.
double auc(std::span<const double> scores, std::span<const std::uint8_t> truth);
/// Mean of the speech AUC and the silence AUC (negated scores, flipped labels).
double auc_macro(std::span<const double> scores, std::span<const std::uint8_t> truth);

enum class Mode { Scratch, Transfer };
std::string_view mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

/// Missing metrics (single-class truth) are std::nullopt and print as NA.
struct MetricRow {
  std::string subject;
  TaskId train_task = TaskId::Listen;
  TaskId test_task = TaskId::Listen;
  Mode mode = Mode::Scratch;
  std::optional<double> f1_macro;
  std::optional<double> balanced_accuracy;
  std::optional<double> auc_macro;
};

/// All three metrics from probabilities and soft labels.
MetricRow score(std::span<const float> probs, std::span<const float> soft_labels);

inline constexpr std::string_view kResultsHeader =
    "subject,train_task,test_task,mode,f1_macro,balanced_accuracy,auc_macro";

std::string results_csv(std::span<const MetricRow> rows);
void write_results_csv(std::span<const MetricRow> rows, const std::filesystem::path& path);
std::vector<MetricRow> read_results_csv(const std::filesystem::path& path);
std::vector<MetricRow> parse_results_csv(std::string_view text, const std::string& origin = "results");

struct SummaryCell {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Mean and population std over present values.
SummaryCell summarize(std::span<const double> values);

/// Markdown tables: in-task results and cross-task results, mean +- std over
/// subjects per (cell, mode, metric).
std::string in_task_table(std::span<const MetricRow> rows);
std::string cross_task_table(std::span<const MetricRow> rows);

/// "listen to play." style label for a train/test pairing.
std::string condition_label(TaskId train_task, TaskId test_task);

}  // namespace megtl
