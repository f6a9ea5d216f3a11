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

// Recording / VAD data model and their binary file formats.
//
// MEGR (recording), all little-endian:
//   "MEGR" | u32 version=1 | u32 n_channels | f64 sample_rate_hz |
//   u64 n_samples | f32 payload, channel-major
// VADI (voice activity intervals):
//   "VADI" | u32 version=1 | u64 n_intervals | (u64 start, u64 end)*

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace megtl {

enum class TaskId { Listen, Playback, Production, Pretrain };

inline constexpr std::array<TaskId, 3> kTargetTasks = {TaskId::Listen, TaskId::Playback,
                                                       TaskId::Production};

/// Lowercase name used in every file format ("listen", "playback", ...).
std::string_view task_name(TaskId t);
/// Short label used in report tables ("listen", "play.", "prod.").
std::string_view task_short_name(TaskId t);
std::optional<TaskId> parse_task(std::string_view name);

/// Multichannel sensor time series. Immutable once constructed; the
/// constructor enforces the invariants.
class Recording {
 public:
  /// `samples` is channel-major: n_channels blocks of n_samples values.
  Recording(std::string subject_id, TaskId task, double sample_rate_hz, std::size_t n_channels,
            std::vector<float> samples);

  const std::string& subject_id() const noexcept { return subject_id_; }
  TaskId task() const noexcept { return task_; }
  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  std::size_t n_channels() const noexcept { return n_channels_; }
  std::size_t n_samples() const noexcept { return n_samples_; }

  std::span<const float> channel(std::size_t c) const {
    return {samples_.data() + c * n_samples_, n_samples_};
  }
  float at(std::size_t c, std::size_t t) const { return samples_[c * n_samples_ + t]; }
  std::span<const float> samples() const noexcept { return samples_; }

 private:
  std::string subject_id_;
  TaskId task_;
  double sample_rate_hz_;
  std::size_t n_channels_;
  std::size_t n_samples_;
  std::vector<float> samples_;
};

struct Interval {
  std::uint64_t start = 0;
  std::uint64_t end = 0;  // exclusive

  std::uint64_t length() const noexcept { return end - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Sorted, non-overlapping half-open speech intervals in sample units.
class VadTrack {
 public:
  VadTrack() = default;
  explicit VadTrack(std::vector<Interval> intervals);

  std::span<const Interval> intervals() const noexcept { return intervals_; }
  bool empty() const noexcept { return intervals_.empty(); }
  std::uint64_t speech_samples() const noexcept;
  /// Per-sample 0/1 view over [0, n_samples). Throws if an interval overruns.
  std::vector<std::uint8_t> mask(std::size_t n_samples) const;

  friend bool operator==(const VadTrack&, const VadTrack&) = default;

 private:
  std::vector<Interval> intervals_;
};

/// Fraction of `n_samples` covered by speech intervals.
double speech_fraction(const VadTrack& vad, std::size_t n_samples);

/// Subject and task are not part of the MEGR payload; the caller supplies
/// them (usually from a manifest row).
Recording load_recording(const std::filesystem::path& path, std::string subject_id = {},
                         TaskId task = TaskId::Listen);
/// Overwrites `path`.
void write_recording(const Recording& r, const std::filesystem::path& path);

VadTrack load_vad(const std::filesystem::path& path);
void write_vad(const VadTrack& v, const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Disjoint train/val/test index lists over windows.
struct SplitAssignment {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Frame-level shuffle split. Sizes: train = floor(0.70 n), val =
/// floor(0.15 n), test = remainder; an empty split borrows one element from
/// the largest.
SplitAssignment split_frames(std::size_t n_windows, std::uint64_t seed);

/// Split seed for one (subject, task) recording, shared by training and
/// evaluation so both agree on which windows are held out.
std::uint64_t split_seed(std::uint64_t base_seed, std::string_view subject_id, TaskId task);

}  // namespace megtl
