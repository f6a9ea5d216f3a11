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
#include <filesystem>
#include <set>

#include "megtl/error.hpp"
#include "megtl/protocol.hpp"
#include "megtl/synth.hpp"
#include "test_util.hpp"

namespace megtl {
namespace {

namespace fs = std::filesystem;

/// Two subjects, 8 channels, one minute each; trains in well under a second.
SynthPreset tiny_preset() {
  auto p = synth_preset("easy");
  p.cfg.n_channels = 8;
  p.cfg.n_informative = 4;
  p.cfg.duration_s = 60.0;
  p.pretrain_duration_s = 60.0;
  p.n_subjects = 2;
  return p;
}

ProtocolConfig tiny_config() {
  auto c = ProtocolConfig::compact();
  c.model.d_model = 8;
  c.model.n_heads = 2;
  for (TrainConfig* t : {&c.pretrain, &c.scratch, &c.finetune}) t->max_epochs = 2;
  c.signflip_iters = 200;
  c.seed = 3;
  return c;
}

TEST(ProtocolTest, LoadRowBringsDataToTargetRate) {
  testutil::TempDir dir;
  const std::size_t n = 4000;
  std::vector<float> x(2 * n);
  for (std::size_t t = 0; t < n; ++t) x[t] = x[n + t] = static_cast<float>(std::sin(2 * M_PI * 5.0 * t / 1000.0));
  write_recording(Recording("s", TaskId::Listen, 1000.0, 2, x), dir / "r.megr");
  write_vad(VadTrack({{400, 1200}, {2001, 2003}}), dir / "r.vad");
  const auto loaded = load_row({"s", TaskId::Listen, dir / "r.megr", dir / "r.vad"}, 250.0);
  EXPECT_EQ(loaded.recording.sample_rate_hz(), 250.0);
  EXPECT_EQ(loaded.recording.n_samples(), 1000u);
  EXPECT_EQ(loaded.recording.subject_id(), "s");
  EXPECT_EQ(loaded.vad, decimate_vad(VadTrack({{400, 1200}, {2001, 2003}}), 4));

  ProtocolConfig cfg;
  const auto ws = row_windows({"s", TaskId::Listen, dir / "r.megr", dir / "r.vad"}, cfg);
  EXPECT_EQ(ws.window_len(), 125u);
  EXPECT_EQ(ws.size(), 8u);  // non-overlapping 0.5 s windows over 4 s
}

TEST(ProtocolTest, TrainingDataSplitsNormalizesAndAugments) {
  const auto rec = generate_recording(tiny_preset().cfg, "s", TaskId::Listen, 1);
  const auto all = windowize(rec.recording, rec.vad, 0.5, 0.5);
  const auto d = prepare_training_data(all, 9, true);
  EXPECT_EQ(d.split.train_idx.size() + d.split.val_idx.size() + d.split.test_idx.size(), all.size());
  EXPECT_EQ(d.train.size(), 4 * d.split.train_idx.size());
  EXPECT_EQ(d.val.size(), d.split.val_idx.size());
  EXPECT_EQ(d.stats.source, NormSource::TrainSplit);
  EXPECT_EQ(prepare_training_data(all, 9, false).train.size(), d.split.train_idx.size());

  // The unshifted copy of the train split has zero mean and unit std per
  // (channel, time index); val uses the same affine map.
  const std::size_t n_train = d.split.train_idx.size();
  const std::size_t T = all.window_len();
  for (std::size_t f : {std::size_t{0}, T - 1, 3 * T + 17}) {
    double s = 0, sq = 0;
    for (std::size_t i = 0; i < n_train; ++i) {
      const double v = d.train.window(i)[f];
      s += v;
      sq += v * v;
    }
    const double cnt = static_cast<double>(n_train);
    EXPECT_NEAR(s / cnt, 0.0, 1e-4);
    EXPECT_NEAR(std::sqrt(sq / cnt - (s / cnt) * (s / cnt)), 1.0, 1e-3);
    const std::size_t vi = d.split.val_idx[0];
    EXPECT_NEAR(d.val.window(0)[f], (all.window(vi)[f] - d.stats.mean[f]) / d.stats.std[f], 1e-4);
  }

  const auto test = prepare_test_windows(all, 9);
  EXPECT_EQ(test.size(), d.split.test_idx.size());
  double s = 0;
  for (float v : test.data()) s += v;
  EXPECT_NEAR(s / static_cast<double>(test.data().size()), 0.0, 1e-4);
}

TEST(ProtocolTest, RunSeedAndFilenames) {
  EXPECT_EQ(run_seed(1, "sub01", TaskId::Listen), run_seed(1, "sub01", TaskId::Listen));
  std::set<std::uint64_t> seeds;
  for (std::uint64_t b : {1, 2}) {
    for (const char* s : {"sub01", "sub02"}) {
      for (TaskId t : kTargetTasks) seeds.insert(run_seed(b, s, t));
    }
  }
  EXPECT_EQ(seeds.size(), 12u);
  EXPECT_EQ(checkpoint_filename("sub03", TaskId::Playback, Mode::Transfer), "sub03_playback_transfer.megc");
  EXPECT_EQ(checkpoint_filename("sub03", TaskId::Production, Mode::Scratch), "sub03_production_scratch.megc");
}

TEST(ProtocolTest, CompactProfileKeepsLearningRateRatio) {
  const auto c = ProtocolConfig::compact();
  EXPECT_DOUBLE_EQ(c.finetune.lr / c.scratch.lr, TrainConfig::fine_tune().lr / TrainConfig::pretrain().lr);
  EXPECT_NO_THROW(c.model.validate());
}

TEST(ProtocolTest, TrainRowTagsSourceAndSharesOrder) {
  testutil::TempDir dir;
  const auto out = write_synth_dataset(tiny_preset(), dir.path(), 4);
  const auto cfg = tiny_config();
  const auto pre = train_row(*out.manifest.pretrain_row(), cfg);
  EXPECT_EQ(pre.checkpoint.source, CheckpointSource::Pretrained);
  const auto* row = out.manifest.find("sub01", TaskId::Listen);
  const auto scratch = train_row(*row, cfg);
  const auto ft = train_row(*row, cfg, &pre.checkpoint);
  EXPECT_EQ(scratch.checkpoint.source, CheckpointSource::Scratch);
  EXPECT_EQ(ft.checkpoint.source, CheckpointSource::FineTuned);
  EXPECT_EQ(scratch.history.order_digests, ft.history.order_digests);
  EXPECT_EQ(scratch.checkpoint.seed, run_seed(cfg.seed, "sub01", TaskId::Listen));

  const auto ws = prepare_test_windows(row_windows(*row, cfg), split_seed(cfg.seed, "sub01", TaskId::Listen));
  const auto m = evaluate(scratch.checkpoint, ws);
  EXPECT_EQ(m.subject, "sub01");
  EXPECT_EQ(m.test_task, TaskId::Listen);
  EXPECT_TRUE(m.f1_macro.has_value());

  auto other = cfg;
  other.window_s = 0.25;
  const auto short_ws = row_windows(*row, other);
  EXPECT_THROW(evaluate(scratch.checkpoint, short_ws), DataError);
}

TEST(ProtocolTest, PipelineIsDeterministicAndMatchesCrossTask) {
  testutil::TempDir dir;
  const auto data = write_synth_dataset(tiny_preset(), dir / "data", 4);
  const auto cfg = tiny_config();
  std::vector<std::string> log;
  const auto a = run_pipeline(data.manifest, cfg, dir / "a", {[&](const std::string& s) { log.push_back(s); }});
  const auto b = run_pipeline(data.manifest, cfg, dir / "b");

  EXPECT_EQ(a.rows.size(), 2u * 2 * 9);
  EXPECT_EQ(a.stats.rows.size(), 27u + 3);
  EXPECT_EQ(log.size(), 2u + 2 * 3 * 2);
  for (const char* f : {"results.csv", "stats.csv", "checkpoints/pretrained.megc",
                        "checkpoints/sub02_production_transfer.megc", "checkpoints/sub01_listen_scratch_history.csv"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(testutil::slurp(dir / "a" / f), testutil::slurp(dir / "b" / f)) << f;
  }

  // Re-evaluating the stored checkpoints reproduces the pipeline's rows.
  const auto cross = crosstask_matrix(data.manifest, dir / "a" / "checkpoints", cfg);
  EXPECT_TRUE(cross.warnings.empty());
  EXPECT_EQ(results_csv(cross.rows), results_csv(a.rows));

  fs::remove(dir / "a" / "checkpoints" / "sub01_playback_scratch.megc");
  const auto partial = crosstask_matrix(data.manifest, dir / "a" / "checkpoints", cfg);
  ASSERT_EQ(partial.warnings.size(), 1u);
  EXPECT_NE(partial.warnings[0].find("sub01_playback_scratch.megc"), std::string::npos);
  EXPECT_EQ(partial.rows.size(), a.rows.size() - 3);
}

TEST(ProtocolTest, PipelineNeedsPretrainRow) {
  testutil::TempDir dir;
  auto data = write_synth_dataset(tiny_preset(), dir / "data", 4);
  auto m = data.manifest;
  std::erase_if(m.rows, [](const ManifestRow& r) { return r.task == TaskId::Pretrain; });
  EXPECT_THROW(run_pipeline(m, tiny_config(), dir / "out"), DataError);
}

}  // namespace
}  // namespace megtl
