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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "megtl/checkpoint.hpp"
#include "megtl/model.hpp"
#include "megtl/windows.hpp"

namespace megtl {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping

  static TrainConfig pretrain() { return {}; }
  static TrainConfig fine_tune() {
    TrainConfig c;
    c.lr = 1e-4;
    return c;
  }
  void validate() const;
};

template <typename T>
struct AdamState {
  ParameterSet<T> m;
  ParameterSet<T> v;

  static AdamState like(const ParameterSet<T>& p) {
    return {ParameterSet<T>::zeros_like(p), ParameterSet<T>::zeros_like(p)};
  }
};

/// One AdamW update at step t >= 1 (bias-corrected moments, decoupled decay):
///   theta <- theta (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
/// Throws NumericError without touching anything if a gradient is non-finite.
template <typename T>
void adamw_step(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state,
                const TrainConfig& cfg, std::size_t t);

/// Scales `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
template <typename T>
double clip_grad_norm(ParameterSet<T>& grads, double max_norm);

/// Patience-based stopping on validation loss. An epoch improves when its
/// loss is strictly below the best so far; ties keep the earlier epoch.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `val_loss` is a new best.
  bool update(std::size_t epoch, double val_loss);
  bool should_stop() const noexcept { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;     // 0 when no epoch ran
  std::size_t stopped_epoch = 0;
  double initial_val_loss = 0.0;  // validation loss of the starting parameters
  /// Hash of each epoch's mini-batch order; equal seeds give equal digests
  /// whatever the initialization.
  std::vector<std::uint64_t> order_digests;
};

/// `epoch,train_loss,val_loss,is_best` with LF line endings.
std::string history_csv(const TrainHistory& h);
void write_history_csv(const TrainHistory& h, const std::filesystem::path& path);

/// Probabilities for every window (train_mode off), batched.
std::vector<float> predict(const ModelConfig& cfg, const Parameters& params, const WindowSet& ws,
                           std::size_t batch_size = 256);
double mean_loss(const ModelConfig& cfg, const Parameters& params, const WindowSet& ws,
                 std::size_t batch_size = 256);

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

struct TrainObserver {
  std::function<void(const EpochRecord&, bool is_best)> on_epoch;
};

/// Mini-batch AdamW with per-epoch validation, early stopping and best-epoch
/// selection. Without `init` the model starts from init_params(seed) and the
/// result is tagged Scratch; with `init` it starts from those weights and is
/// tagged FineTuned. Data order depends only on cfg.seed.
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const WindowSet& train_ws,
                  const WindowSet& val_ws, const Checkpoint* init = nullptr,
                  const TrainObserver& observer = {});

}  // namespace megtl
