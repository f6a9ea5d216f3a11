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

#include "megtl/dsp.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "megtl/error.hpp"

namespace megtl {

double FirFilter::magnitude(double f_hz) const {
  const double w = 2.0 * std::numbers::pi * f_hz / sample_rate_hz;
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < taps.size(); ++n) {
    acc += taps[n] * std::polar(1.0, -w * static_cast<double>(n));
  }
  return std::abs(acc);
}

FirFilter design_lowpass_fir(double sample_rate_hz, double cutoff_hz, std::size_t n_taps) {
  if (n_taps < 3 || n_taps % 2 == 0) throw InvalidArgument("FIR length must be odd and >= 3");
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0)) {
    throw InvalidArgument("FIR cutoff must lie in (0, fs/2)");
  }
  const double fc = cutoff_hz / sample_rate_hz;
  const auto M = static_cast<double>(n_taps - 1);
  const auto mid = static_cast<std::ptrdiff_t>((n_taps - 1) / 2);

  FirFilter f;
  f.sample_rate_hz = sample_rate_hz;
  f.cutoff_hz = cutoff_hz;
  f.passband_edge_hz = cutoff_hz;
  f.taps.resize(n_taps);
  for (std::size_t n = 0; n < n_taps; ++n) {
    const auto k = static_cast<double>(static_cast<std::ptrdiff_t>(n) - mid);
    const double x = 2.0 * fc * k;
    const double sinc = (k == 0.0) ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double hamming = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / M);
    f.taps[n] = 2.0 * fc * sinc * hamming;
  }
  // Mirror the upper half onto the lower so the taps are exactly palindromic.
  for (std::size_t n = 0; n < n_taps / 2; ++n) f.taps[n_taps - 1 - n] = f.taps[n];
  const double dc = std::accumulate(f.taps.begin(), f.taps.end(), 0.0);
  for (double& t : f.taps) t /= dc;
  return f;
}

FirFilter design_antialias_fir(double fs_in, int factor) {
  if (factor < 2) throw InvalidArgument("decimation factor must be >= 2");
  const double new_nyquist = fs_in / (2.0 * factor);
  const double edge = 0.8 * new_nyquist;
  auto f = design_lowpass_fir(fs_in, 0.5 * (edge + new_nyquist),
                              32 * static_cast<std::size_t>(factor) + 1);
  f.passband_edge_hz = edge;
  return f;
}

std::vector<double> filter_zero_phase(std::span<const double> x, const FirFilter& filter,
                                      std::size_t step) {
  const std::size_t n = x.size();
  const std::size_t L = filter.n_taps();
  const std::size_t half = filter.delay();
  if (n < L) throw DataError("signal shorter than the filter length");
  if (step == 0) throw InvalidArgument("step must be >= 1");

  // Reflection without repeating the edge sample: x[-k] = x[k], x[n-1+k] = x[n-1-k].
  std::vector<double> padded(n + 2 * half);
  for (std::size_t i = 0; i < half; ++i) {
    padded[i] = x[half - i];
    padded[half + n + i] = x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));

  const std::size_t n_out = (n + step - 1) / step;
  std::vector<double> y(n_out);
  const auto& h = filter.taps;
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* p = padded.data() + o * step;
    double acc = 0.0;
    for (std::size_t k = 0; k < L; ++k) acc += h[k] * p[L - 1 - k];
    y[o] = acc;
  }
  return y;
}

Recording decimate(const Recording& r, int factor) {
  const auto filter = design_antialias_fir(r.sample_rate_hz(), factor);
  if (r.n_samples() < filter.n_taps()) throw DataError("recording shorter than the filter length");
  const auto step = static_cast<std::size_t>(factor);
  const std::size_t n_out = (r.n_samples() + step - 1) / step;
  std::vector<float> out(r.n_channels() * n_out);
  std::vector<double> buf(r.n_samples());
  for (std::size_t c = 0; c < r.n_channels(); ++c) {
    const auto ch = r.channel(c);
    std::copy(ch.begin(), ch.end(), buf.begin());
    const auto y = filter_zero_phase(buf, filter, step);
    for (std::size_t i = 0; i < n_out; ++i) out[c * n_out + i] = static_cast<float>(y[i]);
  }
  return Recording(r.subject_id(), r.task(), r.sample_rate_hz() / factor, r.n_channels(),
                   std::move(out));
}

Recording resample_to(const Recording& r, double target_hz) {
  const double ratio = r.sample_rate_hz() / target_hz;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    throw DataError("sample rate " + std::to_string(r.sample_rate_hz()) +
                    " Hz is not an integer multiple of " + std::to_string(target_hz) + " Hz");
  }
  if (rounded == 1.0) return r;
  return decimate(r, static_cast<int>(rounded));
}

NormStats compute_norm_stats(const WindowSet& w, std::span<const std::size_t> indices,
                             NormSource source) {
  if (indices.empty()) throw InvalidArgument("compute_norm_stats needs at least one window");
  const std::size_t cells = w.window_numel();
  NormStats s;
  s.n_channels = w.n_channels();
  s.window_len = w.window_len();
  s.source = source;
  s.mean.assign(cells, 0.0);
  s.std.assign(cells, 0.0);

  for (std::size_t i : indices) {
    const auto x = w.window(i);
    for (std::size_t k = 0; k < cells; ++k) s.mean[k] += x[k];
  }
  const auto n = static_cast<double>(indices.size());
  for (double& m : s.mean) m /= n;
  for (std::size_t i : indices) {
    const auto x = w.window(i);
    for (std::size_t k = 0; k < cells; ++k) {
      const double d = x[k] - s.mean[k];
      s.std[k] += d * d;
    }
  }
  for (double& v : s.std) v = std::max(std::sqrt(v / n), NormStats::kStdFloor);
  return s;
}

NormStats compute_norm_stats(const WindowSet& w, NormSource source) {
  std::vector<std::size_t> all(w.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return compute_norm_stats(w, all, source);
}

WindowSet apply_norm(const WindowSet& w, const NormStats& s) {
  if (s.n_channels != w.n_channels() || s.window_len != w.window_len()) {
    throw DataError("normalization statistics do not match the window shape");
  }
  const std::size_t cells = w.window_numel();
  std::vector<float> data(w.data().size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto x = w.window(i);
    float* out = data.data() + i * cells;
    for (std::size_t k = 0; k < cells; ++k) {
      out[k] = static_cast<float>((x[k] - s.mean[k]) / s.std[k]);
    }
  }
  return WindowSet(w.n_channels(), w.window_len(), std::move(data),
                   std::vector<float>(w.soft_labels().begin(), w.soft_labels().end()),
                   w.subject_id(), w.task(), w.stride_samples());
}

VadTrack decimate_vad(const VadTrack& v, int factor) {
  if (factor < 1) throw InvalidArgument("decimation factor must be >= 1");
  const auto f = static_cast<std::uint64_t>(factor);
  std::vector<Interval> out;
  for (const auto& iv : v.intervals()) {
    const std::uint64_t s = (iv.start + f - 1) / f, e = (iv.end + f - 1) / f;
    if (e > s) out.push_back({s, e});
  }
  return VadTrack(std::move(out));
}

}  // namespace megtl
