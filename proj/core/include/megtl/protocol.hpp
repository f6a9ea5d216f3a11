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


// The experimental protocol: per-recording data preparation, scratch vs
// pretrained-then-fine-tuned training, and the 3x3 train/test task matrix.
//
// Per recording: resample to the target rate, cut 0.5 s windows, split
// 70/15/15 at window level, z-score train and val with train-split
// statistics, then roll-augment the train split. The test split is z-scored
// with its own statistics.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "megtl/checkpoint.hpp"
#include "megtl/dsp.hpp"
#include "megtl/manifest.hpp"
#include "megtl/metrics.hpp"
#include "megtl/stats.hpp"
#include "megtl/train.hpp"
#include "megtl/windows.hpp"

namespace megtl {

struct ProtocolConfig {
  /// n_channels and window_len are taken from the data.
  ModelConfig model;
  TrainConfig pretrain = TrainConfig::pretrain();
  TrainConfig scratch = TrainConfig::pretrain();
  TrainConfig finetune = TrainConfig::fine_tune();
  std::uint64_t seed = 0;
  double target_rate_hz = 250.0;
  double window_s = 0.5;
  bool augment = true;
  std::size_t signflip_iters = kSignflipIters;

  /// Reduced model and schedule sized for a single CPU core: d_model 16, one
  /// block, FFN expansion 2, batch 32, lr 3e-3 (fine-tuning 3e-4), at most
  /// 12 epochs (6 for pretraining) with patience 4.
  static ProtocolConfig compact();
};

struct LoadedRow {
  Recording recording;
  VadTrack vad;
};

/// Loads a manifest row and brings recording and VAD to `target_hz`.
LoadedRow load_row(const ManifestRow& row, double target_hz);

/// All windows of one manifest row at the protocol's rate and window length.
WindowSet row_windows(const ManifestRow& row, const ProtocolConfig& cfg);

struct TrainingData {
  WindowSet train;  // normalized, then augmented
  WindowSet val;    // normalized with train statistics
  NormStats stats;
  SplitAssignment split;
};

TrainingData prepare_training_data(const WindowSet& all, std::uint64_t split_seed, bool augment);
/// Test split of `all`, z-scored with its own statistics.
WindowSet prepare_test_windows(const WindowSet& all, std::uint64_t split_seed);

/// Seed shared by the scratch and fine-tuning runs of one (subject, task), so
/// both see the same mini-batch order.
std::uint64_t run_seed(std::uint64_t base_seed, const std::string& subject, TaskId task);

/// `cfg.model` with the data's channel count and window length.
ModelConfig model_for(const ProtocolConfig& cfg, const WindowSet& ws);

/// Trains one row. With `init` the run fine-tunes (cfg.finetune), otherwise it
/// trains from scratch (cfg.scratch, or cfg.pretrain for a Pretrain row,
/// which is then tagged Pretrained).
TrainResult train_row(const ManifestRow& row, const ProtocolConfig& cfg, const Checkpoint* init = nullptr,
                      const TrainObserver& observer = {});

/// Probabilities on already-normalized windows, scored against their labels.
MetricRow evaluate(const Checkpoint& ckpt, const WindowSet& test_ws);

/// `{subject}_{task}_{mode}.megc`
std::string checkpoint_filename(const std::string& subject, TaskId task, Mode mode);

struct CrossTaskResult {
  std::vector<MetricRow> rows;
  std::vector<std::string> warnings;
};

/// Evaluates every stored (subject, train task, mode) checkpoint on the test
/// split of every target task of that subject. Missing checkpoints or
/// recordings produce warnings and skipped rows.
CrossTaskResult crosstask_matrix(const Manifest& manifest, const std::filesystem::path& ckpt_dir,
                                 const ProtocolConfig& cfg);

struct PipelineLog {
  std::function<void(const std::string&)> info;
};

struct PipelineResult {
  std::vector<MetricRow> rows;
  StatsReport stats;
};

/// Full protocol over a manifest with one Pretrain row and target subjects:
/// pretrain, then per subject and task a scratch and a fine-tuned model, the
/// 3x3 matrix per subject and mode, and the statistics. Processes one
/// subject at a time. Writes checkpoints, histories, results.csv and
/// stats.csv (plus side tables) under `out_dir`.
PipelineResult run_pipeline(const Manifest& manifest, const ProtocolConfig& cfg, const std::filesystem::path& out_dir,
                            const PipelineLog& log = {});

}  // namespace megtl
