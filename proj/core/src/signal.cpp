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

#include "megtl/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "megtl/error.hpp"
#include "megtl/rng.hpp"

namespace megtl {

namespace {
constexpr std::uint32_t kFormatVersion = 1;
}

std::string_view task_name(TaskId t) {
  switch (t) {
    case TaskId::Listen: return "listen";
    case TaskId::Playback: return "playback";
    case TaskId::Production: return "production";
    case TaskId::Pretrain: return "pretrain";
  }
  return "unknown";
}

std::string_view task_short_name(TaskId t) {
  switch (t) {
    case TaskId::Listen: return "listen";
    case TaskId::Playback: return "play.";
    case TaskId::Production: return "prod.";
    case TaskId::Pretrain: return "pretrain";
  }
  return "unknown";
}

std::optional<TaskId> parse_task(std::string_view name) {
  for (TaskId t : {TaskId::Listen, TaskId::Playback, TaskId::Production, TaskId::Pretrain}) {
    if (name == task_name(t)) return t;
  }
  return std::nullopt;
}

Recording::Recording(std::string subject_id, TaskId task, double sample_rate_hz,
                     std::size_t n_channels, std::vector<float> samples)
    : subject_id_(std::move(subject_id)),
      task_(task),
      sample_rate_hz_(sample_rate_hz),
      n_channels_(n_channels),
      n_samples_(0),
      samples_(std::move(samples)) {
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw InvalidArgument("recording sample rate must be positive");
  }
  if (n_channels_ == 0) throw InvalidArgument("recording needs at least one channel");
  if (samples_.size() % n_channels_ != 0) {
    throw InvalidArgument("sample count is not a multiple of the channel count");
  }
  n_samples_ = samples_.size() / n_channels_;
  for (float v : samples_) {
    if (!std::isfinite(v)) {
      throw FormatError(FormatError::Kind::NonFinite, "recording contains NaN/Inf samples");
    }
  }
}

VadTrack::VadTrack(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    if (intervals_[i].end <= intervals_[i].start) {
      throw InvalidArgument("VAD interval must have end > start");
    }
    if (i > 0 && intervals_[i].start < intervals_[i - 1].end) {
      throw InvalidArgument("VAD intervals must be sorted and non-overlapping");
    }
  }
}

std::uint64_t VadTrack::speech_samples() const noexcept {
  std::uint64_t total = 0;
  for (const auto& iv : intervals_) total += iv.length();
  return total;
}

std::vector<std::uint8_t> VadTrack::mask(std::size_t n_samples) const {
  std::vector<std::uint8_t> m(n_samples, 0);
  for (const auto& iv : intervals_) {
    if (iv.end > n_samples) throw InvalidArgument("VAD interval exceeds recording length");
    std::fill(m.begin() + static_cast<std::ptrdiff_t>(iv.start),
              m.begin() + static_cast<std::ptrdiff_t>(iv.end), std::uint8_t{1});
  }
  return m;
}

double speech_fraction(const VadTrack& vad, std::size_t n_samples) {
  if (n_samples == 0) throw InvalidArgument("speech_fraction over zero samples");
  const auto ivs = vad.intervals();
  if (!ivs.empty() && ivs.back().end > n_samples) {
    throw InvalidArgument("VAD interval exceeds recording length");
  }
  return static_cast<double>(vad.speech_samples()) / static_cast<double>(n_samples);
}

Recording load_recording(const std::filesystem::path& path, std::string subject_id, TaskId task) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic("MEGR");
  const auto version = in.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw FormatError(FormatError::Kind::BadVersion, path.string() + ": unsupported MEGR version");
  }
  const auto n_channels = in.get<std::uint32_t>();
  const auto fs = in.get<double>();
  const auto n_samples = in.get<std::uint64_t>();
  if (n_channels == 0) throw FormatError(FormatError::Kind::Malformed, "MEGR with zero channels");
  const std::uint64_t count = std::uint64_t{n_channels} * n_samples;
  if (count > in.remaining() / sizeof(float)) {
    throw FormatError(FormatError::Kind::Truncated, path.string() + ": truncated payload");
  }
  if (in.remaining() != count * sizeof(float)) {
    throw FormatError(FormatError::Kind::Malformed, path.string() + ": trailing bytes after payload");
  }
  std::vector<float> samples(count);
  in.get_floats(samples);
  if (!(fs > 0.0) || !std::isfinite(fs)) {
    throw FormatError(FormatError::Kind::Malformed, path.string() + ": bad sample rate");
  }
  if (!std::all_of(samples.begin(), samples.end(), [](float v) { return std::isfinite(v); })) {
    throw FormatError(FormatError::Kind::NonFinite, path.string() + ": NaN/Inf in payload");
  }
  return Recording(std::move(subject_id), task, fs, n_channels, std::move(samples));
}

void write_recording(const Recording& r, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.bytes("MEGR");
  out.put(kFormatVersion);
  out.put(static_cast<std::uint32_t>(r.n_channels()));
  out.put(r.sample_rate_hz());
  out.put(static_cast<std::uint64_t>(r.n_samples()));
  out.put_floats(r.samples());
  out.save(path);
}

VadTrack load_vad(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic("VADI");
  if (in.get<std::uint32_t>() != kFormatVersion) {
    throw FormatError(FormatError::Kind::BadVersion, path.string() + ": unsupported VADI version");
  }
  const auto n = in.get<std::uint64_t>();
  if (n > in.remaining() / 16) {
    throw FormatError(FormatError::Kind::Truncated, path.string() + ": truncated interval list");
  }
  std::vector<Interval> intervals(n);
  for (auto& iv : intervals) {
    iv.start = in.get<std::uint64_t>();
    iv.end = in.get<std::uint64_t>();
  }
  try {
    return VadTrack(std::move(intervals));
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

void write_vad(const VadTrack& v, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.bytes("VADI");
  out.put(kFormatVersion);
  out.put(static_cast<std::uint64_t>(v.intervals().size()));
  for (const auto& iv : v.intervals()) {
    out.put(iv.start);
    out.put(iv.end);
  }
  out.save(path);
}

SplitAssignment split_frames(std::size_t n_windows, std::uint64_t seed) {
  if (n_windows < 3) throw InvalidArgument("split_frames needs at least 3 windows");
  // Integer arithmetic: 0.70 * n in floating point can land just below an integer.
  std::array<std::size_t, 3> sizes = {n_windows * 70 / 100, n_windows * 15 / 100, 0};
  sizes[2] = n_windows - sizes[0] - sizes[1];
  for (auto& s : sizes) {
    if (s == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      s = 1;
    }
  }

  std::vector<std::size_t> order(n_windows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  SplitAssignment out;
  out.seed = seed;
  const auto first = order.begin();
  const auto a = first + static_cast<std::ptrdiff_t>(sizes[0]);
  const auto b = a + static_cast<std::ptrdiff_t>(sizes[1]);
  out.train_idx.assign(first, a);
  out.val_idx.assign(a, b);
  out.test_idx.assign(b, order.end());
  for (auto* idx : {&out.train_idx, &out.val_idx, &out.test_idx}) {
    std::sort(idx->begin(), idx->end());
  }
  return out;
}

std::uint64_t split_seed(std::uint64_t base_seed, std::string_view subject_id, TaskId task) {
  return mix64(mix64(base_seed, stable_hash(subject_id)), static_cast<std::uint64_t>(task) + 1);
}

}  // namespace megtl
