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


#include "megtl/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <numeric>

#include "megtl/error.hpp"
#include "megtl/rng.hpp"

namespace megtl {

void SynthConfig::validate() const {
  if (n_channels < 1) throw InvalidArgument("n_channels must be >= 1");
  if (n_informative > n_channels) throw InvalidArgument("n_informative exceeds n_channels");
  if (!(sample_rate_hz > 0.0)) throw InvalidArgument("sample_rate_hz must be > 0");
  if (!(duration_s >= 10.0)) throw InvalidArgument("duration_s must be >= 10");
  for (double f : speech_fraction) {
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("speech fractions must lie in (0,1)");
  }
  if (!(fraction_jitter >= 0.0 && fraction_jitter < 0.1)) throw InvalidArgument("fraction_jitter must lie in [0,0.1)");
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(shared_weight[i] >= 0.0 && task_weight[i] >= 0.0)) throw InvalidArgument("weights must be >= 0");
  }
  if (!(snr >= 0.0)) throw InvalidArgument("snr must be >= 0");
  if (!(population_mix >= 0.0 && population_mix <= 1.0)) throw InvalidArgument("population_mix must lie in [0,1]");
  if (!(speech_median_s > 0.0 && silence_median_s > 0.0 && segment_sigma >= 0.0)) {
    throw InvalidArgument("segment duration parameters must be positive");
  }
}

namespace {

std::uint64_t seed_for(std::uint64_t base, std::string_view tag, std::uint64_t extra = 0) {
  return mix64(mix64(base, stable_hash(tag)), extra);
}

std::size_t n_samples_of(const SynthConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
}

// Unit-variance 2-8 Hz process: random-phase sinusoids at uniform frequencies.
std::vector<double> band_latent(std::uint64_t seed, std::size_t n, double fs) {
  constexpr int kComponents = 32;
  Rng rng(seed);
  std::vector<double> x(n, 0.0);
  const double amp = std::sqrt(2.0 / kComponents);
  for (int m = 0; m < kComponents; ++m) {
    const double w = 2.0 * std::numbers::pi * rng.uniform(2.0, 8.0) / fs;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // Rotation recurrence, re-anchored periodically to bound drift.
    double c = 0, s = 0;
    const double cw = std::cos(w), sw = std::sin(w);
    for (std::size_t t = 0; t < n; ++t) {
      if (t % 4096 == 0) {
        const double a = w * static_cast<double>(t) + phase;
        c = std::cos(a);
        s = std::sin(a);
      }
      x[t] += amp * s;
      const double c2 = c * cw - s * sw;
      s = s * cw + c * sw;
      c = c2;
    }
  }
  return x;
}

struct Latents {
  std::vector<double> s, g, n_listen, n_playback, n_production;
};

Latents make_latents(const SynthConfig& cfg, std::uint64_t subject_seed, std::size_t n) {
  const double fs = cfg.sample_rate_hz;
  return {band_latent(seed_for(subject_seed, "latent.S"), n, fs), band_latent(seed_for(subject_seed, "latent.G"), n, fs),
          band_latent(seed_for(subject_seed, "latent.Nl"), n, fs),
          band_latent(seed_for(subject_seed, "latent.Np"), n, fs),
          band_latent(seed_for(subject_seed, "latent.Nprod"), n, fs)};
}

double task_specific(const Latents& l, TaskId task, std::size_t t) {
  constexpr double r = std::numbers::sqrt2 / 2.0;
  switch (task) {
    case TaskId::Listen:
    case TaskId::Pretrain: return r * (l.g[t] + l.n_listen[t]);
    case TaskId::Playback: return r * (l.g[t] + l.n_playback[t]);
    case TaskId::Production: return l.n_production[t];
  }
  return 0.0;
}

std::vector<double> envelope(const SynthConfig& cfg, const Latents& l, TaskId task) {
  const auto ti = static_cast<std::size_t>(task);
  const double ws = cfg.shared_weight[ti], wt = cfg.task_weight[ti];
  std::vector<double> e(l.s.size());
  for (std::size_t t = 0; t < e.size(); ++t) e[t] = ws * l.s[t] + wt * task_specific(l, task, t);
  return e;
}

std::vector<double> normal_vector(Rng& rng, std::size_t k) {
  std::vector<double> v(k);
  for (auto& x : v) x = rng.normal();
  return v;
}

void unit_rms(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) return;
  const double scale = std::sqrt(static_cast<double>(v.size()) / sq);
  for (auto& x : v) x *= scale;
}

struct Spatial {
  std::vector<std::size_t> channels;  // informative channel indices, ascending
  std::vector<double> common, perception, motor;
};

Spatial make_spatial(const SynthConfig& cfg, std::uint64_t subject_seed) {
  const std::size_t k = cfg.n_informative;
  Rng pop(seed_for(cfg.population_seed, "population", cfg.n_channels));
  std::vector<std::size_t> all(cfg.n_channels);
  std::iota(all.begin(), all.end(), std::size_t{0});
  pop.shuffle(all);
  Spatial sp;
  sp.channels.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(sp.channels.begin(), sp.channels.end());
  const auto pc = normal_vector(pop, k), pp = normal_vector(pop, k), pm = normal_vector(pop, k);

  Rng own(seed_for(subject_seed, "spatial"));
  const double a = cfg.population_mix, b = std::sqrt(1.0 - a * a);
  auto blend = [&](const std::vector<double>& p) {
    auto o = normal_vector(own, k);
    for (std::size_t i = 0; i < k; ++i) o[i] = a * p[i] + b * o[i];
    unit_rms(o);
    return o;
  };
  sp.common = blend(pc);
  sp.perception = blend(pp);
  sp.motor = blend(pm);
  return sp;
}

// Sum of three AR(1) processes with spread poles, unit variance overall.
void pink_noise(Rng& rng, std::span<float> out) {
  constexpr double kPoles[3] = {0.3, 0.85, 0.98};
  double state[3], gain[3];
  for (int i = 0; i < 3; ++i) {
    gain[i] = std::sqrt(1.0 - kPoles[i] * kPoles[i]);
    state[i] = rng.normal();  // stationary start
  }
  const double norm = 1.0 / std::sqrt(3.0);
  for (auto& x : out) {
    double v = 0.0;
    for (int i = 0; i < 3; ++i) {
      state[i] = kPoles[i] * state[i] + gain[i] * rng.normal();
      v += state[i];
    }
    x = static_cast<float>(norm * v);
  }
}

}  // namespace

VadTrack generate_vad(const SynthConfig& cfg, double target_fraction, std::uint64_t seed) {
  cfg.validate();
  if (!(target_fraction > 0.0 && target_fraction < 1.0)) throw InvalidArgument("target fraction must lie in (0,1)");
  const std::size_t n = n_samples_of(cfg);
  const double fs = cfg.sample_rate_hz;
  Rng rng(seed);
  bool speech = rng.coin();
  std::vector<double> dur;
  std::vector<bool> is_speech;
  double total = 0.0, sum_speech = 0.0, sum_silence = 0.0;
  while (total < static_cast<double>(n) || sum_speech == 0.0 || sum_silence == 0.0) {
    const double median = speech ? cfg.speech_median_s : cfg.silence_median_s;
    const double d = median * fs * std::exp(cfg.segment_sigma * rng.normal());
    dur.push_back(d);
    is_speech.push_back(speech);
    (speech ? sum_speech : sum_silence) += d;
    total += d;
    speech = !speech;
  }
  const double a = target_fraction * static_cast<double>(n) / sum_speech;
  const double b = (1.0 - target_fraction) * static_cast<double>(n) / sum_silence;
  std::vector<Interval> out;
  double pos = 0.0;
  for (std::size_t i = 0; i < dur.size(); ++i) {
    const double next = pos + dur[i] * (is_speech[i] ? a : b);
    const auto s = static_cast<std::uint64_t>(std::llround(pos));
    const auto e = i + 1 == dur.size() ? static_cast<std::uint64_t>(n)
                                       : std::min<std::uint64_t>(std::llround(next), n);
    if (is_speech[i] && e > s) out.push_back({s, e});
    pos = next;
  }
  return VadTrack(std::move(out));
}

double subject_speech_fraction(const SynthConfig& cfg, TaskId task, std::uint64_t subject_seed) {
  Rng rng(seed_for(subject_seed, "fraction", static_cast<std::uint64_t>(task)));
  return cfg.speech_fraction[static_cast<std::size_t>(task)] + rng.uniform(-cfg.fraction_jitter, cfg.fraction_jitter);
}

std::array<std::vector<double>, 4> task_envelopes(const SynthConfig& cfg, std::uint64_t subject_seed,
                                                  std::size_t n_samples) {
  const auto l = make_latents(cfg, subject_seed, n_samples);
  return {envelope(cfg, l, TaskId::Listen), envelope(cfg, l, TaskId::Playback), envelope(cfg, l, TaskId::Production),
          envelope(cfg, l, TaskId::Pretrain)};
}

SynthRecording generate_recording(const SynthConfig& cfg, const std::string& subject_id, TaskId task,
                                  std::uint64_t subject_seed) {
  cfg.validate();
  const std::size_t n = n_samples_of(cfg);
  const auto task_tag = static_cast<std::uint64_t>(task);
  VadTrack vad = generate_vad(cfg, subject_speech_fraction(cfg, task, subject_seed),
                              seed_for(subject_seed, "vad", task_tag));
  const auto mask = vad.mask(n);

  std::vector<float> samples(cfg.n_channels * n);
  for (std::size_t c = 0; c < cfg.n_channels; ++c) {
    Rng rng(seed_for(subject_seed, "noise", task_tag * 100003 + c));
    pink_noise(rng, std::span<float>(samples.data() + c * n, n));
  }

  if (cfg.snr > 0.0 && cfg.n_informative > 0) {
    const auto latents = make_latents(cfg, subject_seed, n);
    const auto ti = static_cast<std::size_t>(task);
    const double ws = cfg.shared_weight[ti], wt = cfg.task_weight[ti];
    const auto sp = make_spatial(cfg, subject_seed);
    const auto& group = task == TaskId::Production ? sp.motor : sp.perception;
    for (std::size_t k = 0; k < sp.channels.size(); ++k) {
      float* x = samples.data() + sp.channels[k] * n;
      const double a = cfg.snr * ws * sp.common[k], b = cfg.snr * wt * group[k];
      for (std::size_t t = 0; t < n; ++t) {
        if (mask[t]) x[t] += static_cast<float>(a * latents.s[t] + b * task_specific(latents, task, t));
      }
    }
  }
  return {Recording(subject_id, task, cfg.sample_rate_hz, cfg.n_channels, std::move(samples)), std::move(vad)};
}

std::vector<SynthRecording> generate_subject(const SynthConfig& cfg, const std::string& subject_id,
                                             std::uint64_t subject_seed) {
  std::vector<SynthRecording> out;
  for (TaskId t : kTargetTasks) out.push_back(generate_recording(cfg, subject_id, t, subject_seed));
  return out;
}

SynthPreset synth_preset(const std::string& name) {
  SynthPreset p;
  p.name = name;
  auto& c = p.cfg;
  if (name == "easy" || name == "chance") {
    c.n_channels = 64;
    c.n_informative = 16;
    c.snr = name == "easy" ? 2.0 : 0.0;
    c.duration_s = 300.0;
    p.n_subjects = 1;
  } else if (name == "transfer") {
    c.n_channels = 64;
    c.n_informative = 16;
    c.snr = 0.5;
    c.duration_s = 300.0;
    p.n_subjects = 8;
    p.pretrain_duration_s = 3600.0;
  } else if (name == "paper-shape") {
    c.n_channels = 306;
    c.n_informative = 32;
    c.snr = 0.5;
    c.duration_s = 300.0;
    p.n_subjects = 18;
    p.pretrain_duration_s = 1200.0;
  } else {
    throw InvalidArgument("unknown preset '" + name + "' (easy, chance, transfer, paper-shape)");
  }
  return p;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string subject_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sub%02zu", i);
  return buf;
}

}  // namespace

SynthOutput write_synth_dataset(const SynthPreset& preset, const std::filesystem::path& out_dir,
                                std::uint64_t seed) {
  preset.cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  SynthOutput out;
  auto& m = out.manifest;
  m.metadata["preset"] = preset.name;
  m.metadata["seed"] = std::to_string(seed);
  m.metadata["snr"] = shortest(preset.cfg.snr);
  m.metadata["n_channels"] = std::to_string(preset.cfg.n_channels);
  m.metadata["n_informative"] = std::to_string(preset.cfg.n_informative);
  m.metadata["sample_rate_hz"] = shortest(preset.cfg.sample_rate_hz);

  auto emit = [&](const SynthConfig& cfg, const std::string& subject, TaskId task, std::uint64_t subject_seed) {
    const auto rec = generate_recording(cfg, subject, task, subject_seed);
    const std::string stem = subject + "_" + std::string(task_name(task));
    write_recording(rec.recording, out_dir / (stem + ".megr"));
    write_vad(rec.vad, out_dir / (stem + ".vad"));
    m.rows.push_back({subject, task, stem + ".megr", stem + ".vad"});
    out.summary.push_back({subject, task, subject_speech_fraction(cfg, task, subject_seed),
                           speech_fraction(rec.vad, rec.recording.n_samples())});
  };

  if (preset.pretrain_duration_s > 0.0) {
    SynthConfig cfg = preset.cfg;
    cfg.duration_s = preset.pretrain_duration_s;
    emit(cfg, "pretrain", TaskId::Pretrain, mix64(seed, stable_hash("pretrain")));
  }
  for (std::size_t i = 1; i <= preset.n_subjects; ++i) {
    const std::string subject = subject_name(i);
    const std::uint64_t subject_seed = mix64(seed, stable_hash(subject));
    for (TaskId t : kTargetTasks) emit(preset.cfg, subject, t, subject_seed);
  }
  out.manifest_path = out_dir / "manifest.csv";
  write_manifest(m, out.manifest_path);
  // Re-read so row paths resolve against the manifest directory.
  out.manifest = read_manifest(out.manifest_path);
  return out;
}

}  // namespace megtl
