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
#include "megtl/windows.hpp"

namespace megtl {

/// Linear-phase FIR low-pass. Taps are odd in number and palindromic.
struct FirFilter {
  std::vector<double> taps;
  double sample_rate_hz = 0.0;
  double cutoff_hz = 0.0;        // -6 dB point of the windowed sinc
  double passband_edge_hz = 0.0;
  std::string window = "hamming";

  std::size_t n_taps() const noexcept { return taps.size(); }
  std::size_t delay() const noexcept { return (taps.size() - 1) / 2; }
  /// |H(f)| evaluated directly from the taps.
  double magnitude(double f_hz) const;
};

/// Hamming-windowed sinc with unit DC gain.
FirFilter design_lowpass_fir(double sample_rate_hz, double cutoff_hz, std::size_t n_taps);

/// Anti-aliasing filter for decimation by `factor`: passband edge at 0.8x the
/// new Nyquist, cutoff halfway between that edge and the new Nyquist,
/// 32 * factor + 1 taps (129 at factor 4).
FirFilter design_antialias_fir(double fs_in, int factor);

/// Zero-phase FIR filtering of one channel: reflection padding at both ends,
/// (n_taps - 1) / 2 delay compensation. Output sample i is kept when
/// i % step == 0, so step > 1 filters and decimates in one pass.
std::vector<double> filter_zero_phase(std::span<const double> x, const FirFilter& filter,
                                      std::size_t step = 1);

/// Anti-aliased decimation. Output length ceil(n / factor), rate fs / factor.
Recording decimate(const Recording& r, int factor);

/// Decimates to `target_hz` when the source rate is an integer multiple of it;
/// returns the input unchanged when the rates already match.
Recording resample_to(const Recording& r, double target_hz);

/// VAD intervals on the grid of decimate(r, factor): output sample i (input
/// sample i * factor) is speech iff the input sample was.
VadTrack decimate_vad(const VadTrack& v, int factor);

enum class NormSource { TrainSplit, SelfTest };

/// Per-(channel, within-window time index) z-scoring statistics.
struct NormStats {
  static constexpr double kStdFloor = 1e-8;

  std::size_t n_channels = 0;
  std::size_t window_len = 0;
  std::vector<double> mean;
  std::vector<double> std;
  NormSource source = NormSource::TrainSplit;
};

NormStats compute_norm_stats(const WindowSet& w, std::span<const std::size_t> indices,
                             NormSource source = NormSource::TrainSplit);
/// Statistics over every window of `w`.
NormStats compute_norm_stats(const WindowSet& w, NormSource source = NormSource::SelfTest);

WindowSet apply_norm(const WindowSet& w, const NormStats& s);

}  // namespace megtl
