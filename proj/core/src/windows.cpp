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

#include "megtl/windows.hpp"

#include <algorithm>
#include <cmath>

#include "megtl/error.hpp"

namespace megtl {

WindowSet::WindowSet(std::size_t n_channels, std::size_t window_len, std::vector<float> data,
                     std::vector<float> soft_labels, std::string subject_id, TaskId task,
                     std::size_t stride_samples)
    : n_channels_(n_channels),
      window_len_(window_len),
      data_(std::move(data)),
      labels_(std::move(soft_labels)),
      subject_id_(std::move(subject_id)),
      task_(task),
      stride_(stride_samples) {
  if (n_channels_ == 0 || window_len_ == 0) throw InvalidArgument("window shape must be non-zero");
  if (data_.size() != labels_.size() * window_numel()) {
    throw InvalidArgument("window data size does not match label count");
  }
  for (float y : labels_) {
    if (!(y >= 0.0f && y <= 1.0f)) throw InvalidArgument("soft label outside [0,1]");
  }
}

WindowSet WindowSet::subset(std::span<const std::size_t> indices) const {
  std::vector<float> data;
  std::vector<float> labels;
  data.reserve(indices.size() * window_numel());
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("window index out of range");
    const auto w = window(i);
    data.insert(data.end(), w.begin(), w.end());
    labels.push_back(labels_[i]);
  }
  return WindowSet(n_channels_, window_len_, std::move(data), std::move(labels), subject_id_,
                   task_, stride_);
}

WindowSet windowize(const Recording& r, const VadTrack& vad, double window_s, double stride_s) {
  const auto T = static_cast<std::size_t>(std::lround(window_s * r.sample_rate_hz()));
  const auto stride = static_cast<std::size_t>(std::lround(stride_s * r.sample_rate_hz()));
  if (T == 0 || stride == 0) throw InvalidArgument("window and stride must span >= 1 sample");
  const std::size_t n = r.n_samples();
  if (n < T) throw DataError("recording shorter than one window");

  const auto mask = vad.mask(n);
  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + mask[t];

  const std::size_t count = (n - T) / stride + 1;
  const std::size_t C = r.n_channels();
  std::vector<float> data(count * C * T);
  std::vector<float> labels(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    for (std::size_t c = 0; c < C; ++c) {
      const auto ch = r.channel(c).subspan(start, T);
      std::copy(ch.begin(), ch.end(), data.begin() + static_cast<std::ptrdiff_t>((w * C + c) * T));
    }
    const std::size_t speech = prefix[start + T] - prefix[start];
    labels[w] = static_cast<float>(static_cast<double>(speech) / static_cast<double>(T));
  }
  return WindowSet(C, T, std::move(data), std::move(labels), r.subject_id(), r.task(), stride);
}

WindowSet roll_augment(const WindowSet& w, std::span<const double> fractions) {
  if (w.empty()) throw InvalidArgument("roll_augment on an empty window set");
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("roll fraction must lie in (0,1)");
  }
  const std::size_t N = w.size();
  const std::size_t C = w.n_channels();
  const std::size_t T = w.window_len();

  std::vector<float> data(w.data().begin(), w.data().end());
  std::vector<float> labels(w.soft_labels().begin(), w.soft_labels().end());
  data.reserve(data.size() * (1 + fractions.size()));
  labels.reserve(N * (1 + fractions.size()));

  for (double f : fractions) {
    const auto shift = static_cast<std::size_t>(std::floor(f * static_cast<double>(T))) % T;
    for (std::size_t i = 0; i < N; ++i) {
      const auto src = w.window(i);
      for (std::size_t c = 0; c < C; ++c) {
        const auto row = src.subspan(c * T, T);
        // out[t] = in[(t - shift) mod T]
        data.insert(data.end(), row.end() - static_cast<std::ptrdiff_t>(shift), row.end());
        data.insert(data.end(), row.begin(), row.end() - static_cast<std::ptrdiff_t>(shift));
      }
      labels.push_back(w.soft_labels()[i]);
    }
  }
  return WindowSet(C, T, std::move(data), std::move(labels), w.subject_id(), w.task(),
                   w.stride_samples());
}

}  // namespace megtl
