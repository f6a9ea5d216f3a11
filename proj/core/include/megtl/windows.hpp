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
#include <span>
#include <string>
#include <vector>

#include "megtl/signal.hpp"

namespace megtl {

/// Fixed-length windows [window][channel][time] with one soft label each.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::size_t n_channels, std::size_t window_len, std::vector<float> data,
            std::vector<float> soft_labels, std::string subject_id = {},
            TaskId task = TaskId::Listen, std::size_t stride_samples = 0);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t n_channels() const noexcept { return n_channels_; }
  std::size_t window_len() const noexcept { return window_len_; }
  std::size_t window_numel() const noexcept { return n_channels_ * window_len_; }

  std::span<const float> window(std::size_t i) const {
    return {data_.data() + i * window_numel(), window_numel()};
  }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> soft_labels() const noexcept { return labels_; }

  const std::string& subject_id() const noexcept { return subject_id_; }
  TaskId task() const noexcept { return task_; }
  std::size_t stride_samples() const noexcept { return stride_; }

  /// Windows at `indices`, in that order.
  WindowSet subset(std::span<const std::size_t> indices) const;

 private:
  std::size_t n_channels_ = 0;
  std::size_t window_len_ = 0;
  std::vector<float> data_;
  std::vector<float> labels_;
  std::string subject_id_;
  TaskId task_ = TaskId::Listen;
  std::size_t stride_ = 0;
};

/// Cuts `r` into consecutive windows of round(window_s * fs) samples every
/// round(stride_s * fs) samples; the trailing partial window is dropped.
/// Each label is the fraction of speech samples inside its window.
WindowSet windowize(const Recording& r, const VadTrack& vad, double window_s = 0.5,
                    double stride_s = 0.5);

inline constexpr double kDefaultRollFractions[] = {0.25, 0.50, 0.75};

/// RollAugment: the original windows followed by one circularly
/// right-shifted copy per fraction (shift = floor(f * T)), labels copied.
WindowSet roll_augment(const WindowSet& w,
                       std::span<const double> fractions = kDefaultRollFractions);

}  // namespace megtl
