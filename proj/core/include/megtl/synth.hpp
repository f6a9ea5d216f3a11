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


// Synthetic recordings with voice-activity-coupled structure.
//
// Each channel carries unit-power pink-ish noise. During speech, informative
// channels add
//   snr * (w_shared * m_common * S(t) + w_task * m_group * U_task(t))
// where S, G, N_* are unit-variance 2-8 Hz latents of one subject and
//   U_listen = (G + N_listen) / sqrt2,  U_playback = (G + N_playback) / sqrt2,
//   U_production = N_production,         U_pretrain = (G + N_listen) / sqrt2.
// Mixing vectors have unit RMS over the informative channels and blend a
// population pattern with a subject-specific one, so a model trained on one
// subject partly applies to another. Listen, playback and pretrain use the
// perception pattern for m_group; production uses the motor pattern.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "megtl/manifest.hpp"
#include "megtl/signal.hpp"

namespace megtl {

struct SynthConfig {
  std::size_t n_channels = 306;
  std::size_t n_informative = 32;
  double sample_rate_hz = 250.0;
  double duration_s = 300.0;
  /// Indexed by TaskId.
  std::array<double, 4> speech_fraction = {0.786, 0.748, 0.756, 0.767};
  /// Per-subject uniform jitter applied to the target fraction.
  double fraction_jitter = 0.01;
  double snr = 1.0;
  std::array<double, 4> shared_weight = {0.6, 0.6, 0.6, 0.6};
  std::array<double, 4> task_weight = {0.8, 0.8, 0.8, 0.8};
  /// Weight of the population pattern in every mixing vector, in [0,1].
  double population_mix = 0.8;
  std::uint64_t population_seed = 0x5eed;
  double speech_median_s = 2.0;
  double silence_median_s = 0.6;
  double segment_sigma = 0.5;

  void validate() const;
};

/// Alternating log-normal speech/silence segments, rescaled so the speech
/// fraction matches `target_fraction` up to sample rounding.
VadTrack generate_vad(const SynthConfig& cfg, double target_fraction, std::uint64_t seed);

/// Task target fraction after the subject's jitter.
double subject_speech_fraction(const SynthConfig& cfg, TaskId task, std::uint64_t subject_seed);

struct SynthRecording {
  Recording recording;
  VadTrack vad;
};

SynthRecording generate_recording(const SynthConfig& cfg, const std::string& subject_id, TaskId task,
                                  std::uint64_t subject_seed);

/// One recording per target task.
std::vector<SynthRecording> generate_subject(const SynthConfig& cfg, const std::string& subject_id,
                                             std::uint64_t subject_seed);

/// The un-gated task envelopes w_shared S + w_task U_task over `n_samples`,
/// indexed by TaskId (for inspecting the shared structure).
std::array<std::vector<double>, 4> task_envelopes(const SynthConfig& cfg, std::uint64_t subject_seed,
                                                  std::size_t n_samples);

struct SynthPreset {
  std::string name;
  SynthConfig cfg;
  std::size_t n_subjects = 1;
  double pretrain_duration_s = 0.0;  // 0: no pretraining recording
};

/// "easy", "chance", "transfer" or "paper-shape". Throws InvalidArgument.
SynthPreset synth_preset(const std::string& name);

struct SynthSummaryRow {
  std::string subject;
  TaskId task;
  double target_fraction;
  double realized_fraction;
};

struct SynthOutput {
  Manifest manifest;  // as read back, so row paths are usable directly
  std::filesystem::path manifest_path;
  std::vector<SynthSummaryRow> summary;
};

/// Writes `<subject>_<task>.megr` / `.vad` files and `manifest.csv` under
/// `out_dir`. Subject ids are sub01, sub02, ...; the pretraining recording is
/// subject "pretrain". Files depend only on (preset, seed).
SynthOutput write_synth_dataset(const SynthPreset& preset, const std::filesystem::path& out_dir,
                                std::uint64_t seed);

}  // namespace megtl
