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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "megtl/dsp.hpp"
#include "megtl/error.hpp"
#include "megtl/manifest.hpp"
#include "megtl/synth.hpp"
#include "test_util.hpp"

namespace megtl {
namespace {

SynthConfig small_config(double snr) {
  SynthConfig c;
  c.n_channels = 16;
  c.n_informative = 8;
  c.duration_s = 120.0;
  c.snr = snr;
  return c;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Mean power of channel c over samples where mask == want.
double masked_power(const Recording& r, std::size_t c, const std::vector<std::uint8_t>& mask, int want) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < r.n_samples(); ++t) {
    if (mask[t] != want) continue;
    s += double(r.at(c, t)) * r.at(c, t);
    ++n;
  }
  return s / static_cast<double>(n);
}

TEST(SynthVadTest, FractionHitsTarget) {
  const auto cfg = small_config(1.0);
  const std::size_t n = static_cast<std::size_t>(cfg.duration_s * cfg.sample_rate_hz);
  for (double target : {0.3, 0.748, 0.786}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto vad = generate_vad(cfg, target, seed);
      EXPECT_NEAR(speech_fraction(vad, n), target, 2.0 * static_cast<double>(vad.intervals().size() + 1) / n);
      EXPECT_LE(vad.intervals().back().end, n);
    }
  }
}

TEST(SynthVadTest, SubjectFractionsStayWithinJitter) {
  const SynthConfig cfg;
  for (std::uint64_t s = 0; s < 50; ++s) {
    for (TaskId t : kTargetTasks) {
      const double f = subject_speech_fraction(cfg, t, s);
      EXPECT_LE(std::abs(f - cfg.speech_fraction[static_cast<std::size_t>(t)]), cfg.fraction_jitter);
    }
  }
}

TEST(SynthTest, DeterministicPerSeed) {
  const auto cfg = small_config(1.0);
  const auto a = generate_recording(cfg, "sub01", TaskId::Listen, 7);
  const auto b = generate_recording(cfg, "sub01", TaskId::Listen, 7);
  const auto c = generate_recording(cfg, "sub01", TaskId::Listen, 8);
  EXPECT_TRUE(std::equal(a.recording.samples().begin(), a.recording.samples().end(),
                         b.recording.samples().begin()));
  EXPECT_EQ(a.vad, b.vad);
  EXPECT_FALSE(std::equal(a.recording.samples().begin(), a.recording.samples().end(),
                          c.recording.samples().begin()));
  EXPECT_EQ(a.recording.sample_rate_hz(), 250.0);
  EXPECT_EQ(a.recording.n_samples(), 30000u);
}

TEST(SynthTest, BackgroundHasUnitPower) {
  const auto r = generate_recording(small_config(0.0), "s", TaskId::Listen, 3);
  for (std::size_t c = 0; c < r.recording.n_channels(); ++c) {
    double p = 0;
    for (float v : r.recording.channel(c)) p += double(v) * v;
    EXPECT_NEAR(p / static_cast<double>(r.recording.n_samples()), 1.0, 0.15) << c;
  }
}

TEST(SynthTest, ZeroSnrCarriesNoSpeechPower) {
  const auto r = generate_recording(small_config(0.0), "s", TaskId::Playback, 5);
  const auto mask = r.vad.mask(r.recording.n_samples());
  for (std::size_t c = 0; c < 8; ++c) {
    const double ratio = masked_power(r.recording, c, mask, 1) / masked_power(r.recording, c, mask, 0);
    EXPECT_NEAR(ratio, 1.0, 0.2) << c;
  }
}

TEST(SynthTest, SpeechRaisesPowerOnInformativeChannelsOnly) {
  const auto r = generate_recording(small_config(2.0), "s", TaskId::Listen, 5);
  const auto mask = r.vad.mask(r.recording.n_samples());
  std::size_t raised = 0;
  for (std::size_t c = 0; c < 16; ++c) {
    const double ratio = masked_power(r.recording, c, mask, 1) / masked_power(r.recording, c, mask, 0);
    if (ratio > 1.3) {
      ++raised;
    } else {
      EXPECT_NEAR(ratio, 1.0, 0.2) << c;
    }
  }
  // The mixing weights have unit RMS, so a weight can be small but the
  // typical informative channel gains several times its baseline power.
  EXPECT_GE(raised, 6u);
  EXPECT_LE(raised, 8u);
}

TEST(SynthTest, AddedComponentIsInTheTwoToEightHertzBand) {
  auto cfg = small_config(2.0);
  const auto with = generate_recording(cfg, "s", TaskId::Listen, 9);
  cfg.snr = 0.0;
  const auto without = generate_recording(cfg, "s", TaskId::Listen, 9);
  const std::size_t n = with.recording.n_samples();
  // Noise is identical, so the difference is the speech component alone.
  std::size_t touched = 0, c0 = 0;
  for (std::size_t c = 0; c < cfg.n_channels; ++c) {
    for (std::size_t t = 0; t < n; ++t) {
      if (with.recording.at(c, t) != without.recording.at(c, t)) {
        ++touched;
        c0 = c;
        break;
      }
    }
  }
  EXPECT_EQ(touched, cfg.n_informative);
  std::vector<double> comp(n);
  for (std::size_t t = 0; t < n; ++t) comp[t] = double(with.recording.at(c0, t)) - without.recording.at(c0, t);
  auto power = [&](double hz) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      re += comp[t] * std::cos(2 * M_PI * hz * t / 250.0);
      im += comp[t] * std::sin(2 * M_PI * hz * t / 250.0);
    }
    return re * re + im * im;
  };
  double in_band = 0, out_band = 0;
  for (double hz : {3.0, 4.5, 6.0, 7.0}) in_band += power(hz);
  for (double hz : {20.0, 35.0, 50.0, 80.0}) out_band += power(hz);
  EXPECT_GT(in_band, 20 * out_band);
}

TEST(SynthTest, ListenAndPlaybackShareMoreThanProduction) {
  SynthConfig cfg;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto env = task_envelopes(cfg, s, 20000);
    const auto& L = env[static_cast<std::size_t>(TaskId::Listen)];
    const auto& P = env[static_cast<std::size_t>(TaskId::Playback)];
    const auto& M = env[static_cast<std::size_t>(TaskId::Production)];
    const double lp = correlation(L, P), lm = correlation(L, M), pm = correlation(P, M);
    EXPECT_GT(lp, lm) << s;
    EXPECT_GT(lp, pm) << s;
    EXPECT_GT(lm, 0.0) << s;
  }
}

TEST(SynthTest, ConfigValidation) {
  SynthConfig c;
  c.n_informative = c.n_channels + 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = SynthConfig{};
  c.snr = -1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = SynthConfig{};
  c.duration_s = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(synth_preset("huge"), InvalidArgument);
}

TEST(SynthPresetTest, ShapesMatchDescriptions) {
  const auto easy = synth_preset("easy");
  EXPECT_EQ(easy.cfg.snr, 2.0);
  EXPECT_EQ(easy.cfg.n_channels, 64u);
  EXPECT_EQ(easy.cfg.n_informative, 16u);
  EXPECT_EQ(easy.cfg.duration_s, 300.0);
  EXPECT_EQ(synth_preset("chance").cfg.snr, 0.0);
  const auto transfer = synth_preset("transfer");
  EXPECT_GE(transfer.n_subjects, 8u);
  EXPECT_EQ(transfer.pretrain_duration_s, 3600.0);
  const auto paper = synth_preset("paper-shape");
  EXPECT_EQ(paper.n_subjects, 18u);
  EXPECT_EQ(paper.cfg.n_channels, 306u);
}

TEST(SynthDatasetTest, WritesManifestAndFiles) {
  testutil::TempDir dir;
  auto preset = synth_preset("paper-shape");
  preset.cfg.n_channels = 16;
  preset.cfg.n_informative = 4;
  preset.cfg.duration_s = 10.0;
  preset.pretrain_duration_s = 20.0;
  preset.n_subjects = 3;
  const auto out = write_synth_dataset(preset, dir.path(), 11);
  EXPECT_EQ(out.manifest.rows.size(), 1u + 3 * 3);
  EXPECT_EQ(out.summary.size(), out.manifest.rows.size());
  EXPECT_EQ(out.manifest.metadata.at("preset"), "paper-shape");
  EXPECT_EQ(out.manifest.metadata.at("snr"), "0.5");
  const auto m = read_manifest(out.manifest_path);
  EXPECT_EQ(m.target_subjects(), (std::vector<std::string>{"sub01", "sub02", "sub03"}));
  ASSERT_NE(m.pretrain_row(), nullptr);
  const auto pre = load_recording(m.pretrain_row()->recording);
  EXPECT_EQ(pre.n_samples(), 5000u);
  const auto* row = m.find("sub02", TaskId::Production);
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->recording.filename(), "sub02_production.megr");
  for (const auto& s : out.summary) EXPECT_NEAR(s.realized_fraction, s.target_fraction, 0.02);

  testutil::TempDir again;
  write_synth_dataset(preset, again.path(), 11);
  for (const char* f : {"manifest.csv", "sub03_listen.megr", "sub03_listen.vad", "pretrain_pretrain.megr"}) {
    EXPECT_EQ(testutil::slurp(dir / f), testutil::slurp(again / f)) << f;
  }
}

TEST(ManifestTest, RoundTripAndErrors) {
  testutil::TempDir dir;
  Recording r("x", TaskId::Listen, 250.0, 1, std::vector<float>(10, 0.0f));
  write_recording(r, dir / "a.megr");
  write_vad(VadTrack({{1, 2}}), dir / "a.vad");
  Manifest m;
  m.metadata["preset"] = "custom";
  m.rows.push_back({"s1", TaskId::Listen, "a.megr", "a.vad"});
  m.rows.push_back({"s1", TaskId::Playback, "a.megr", "a.vad"});
  write_manifest(m, dir / "m.csv");
  const auto back = read_manifest(dir / "m.csv");
  EXPECT_EQ(back.metadata.at("preset"), "custom");
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].recording, dir / "a.megr");
  EXPECT_EQ(back.pretrain_row(), nullptr);

  testutil::spit(dir / "dup.csv", "subject,task,recording,vad\ns1,listen,a.megr,a.vad\ns1,listen,a.megr,a.vad\n");
  EXPECT_THROW(read_manifest(dir / "dup.csv"), FormatError);
  testutil::spit(dir / "task.csv", "subject,task,recording,vad\ns1,reading,a.megr,a.vad\n");
  EXPECT_THROW(read_manifest(dir / "task.csv"), FormatError);
  testutil::spit(dir / "missing.csv", "subject,task,recording,vad\ns1,listen,b.megr,a.vad\n");
  EXPECT_THROW(read_manifest(dir / "missing.csv"), IoError);
  testutil::spit(dir / "header.csv", "subject,task,vad\n");
  EXPECT_THROW(read_manifest(dir / "header.csv"), FormatError);
}

}  // namespace
}  // namespace megtl
