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


#include "megtl/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "megtl/error.hpp"
#include "megtl/rng.hpp"

namespace megtl {

LoadedRow load_row(const ManifestRow& row, double target_hz) {
  Recording r = load_recording(row.recording, row.subject, row.task);
  VadTrack vad = load_vad(row.vad);
  const double ratio = r.sample_rate_hz() / target_hz;
  const auto factor = static_cast<int>(std::lround(ratio));
  Recording out = resample_to(r, target_hz);
  if (factor > 1) vad = decimate_vad(vad, factor);
  return {std::move(out), std::move(vad)};
}

WindowSet row_windows(const ManifestRow& row, const ProtocolConfig& cfg) {
  const auto loaded = load_row(row, cfg.target_rate_hz);
  return windowize(loaded.recording, loaded.vad, cfg.window_s, cfg.window_s);
}

TrainingData prepare_training_data(const WindowSet& all, std::uint64_t split_seed, bool augment) {
  TrainingData d;
  d.split = split_frames(all.size(), split_seed);
  d.stats = compute_norm_stats(all, d.split.train_idx, NormSource::TrainSplit);
  WindowSet train = apply_norm(all.subset(d.split.train_idx), d.stats);
  d.train = augment ? roll_augment(train) : std::move(train);
  d.val = apply_norm(all.subset(d.split.val_idx), d.stats);
  return d;
}

WindowSet prepare_test_windows(const WindowSet& all, std::uint64_t split_seed) {
  const auto split = split_frames(all.size(), split_seed);
  WindowSet test = all.subset(split.test_idx);
  return apply_norm(test, compute_norm_stats(test, NormSource::SelfTest));
}

ProtocolConfig ProtocolConfig::compact() {
  ProtocolConfig c;
  c.model.d_model = 16;
  c.model.n_blocks = 1;
  c.model.n_heads = 4;
  c.model.ffn_expansion = 2;
  for (TrainConfig* t : {&c.pretrain, &c.scratch, &c.finetune}) {
    t->batch_size = 32;
    t->patience = 4;
    t->max_epochs = 12;
    t->lr = 3e-3;
  }
  c.pretrain.max_epochs = 6;
  c.finetune.lr = 3e-4;
  return c;
}

std::uint64_t run_seed(std::uint64_t base_seed, const std::string& subject, TaskId task) {
  return mix64(mix64(base_seed, stable_hash(subject)), stable_hash(task_name(task)));
}

ModelConfig model_for(const ProtocolConfig& cfg, const WindowSet& ws) {
  ModelConfig m = cfg.model;
  m.n_channels = ws.n_channels();
  m.window_len = ws.window_len();
  return m;
}

namespace {

TrainResult train_windows(const WindowSet& all, const std::string& subject, TaskId task, const ProtocolConfig& cfg,
                          const Checkpoint* init, const TrainObserver& observer) {
  const auto data = prepare_training_data(all, split_seed(cfg.seed, subject, task), cfg.augment);
  TrainConfig tc = init ? cfg.finetune : (task == TaskId::Pretrain ? cfg.pretrain : cfg.scratch);
  tc.seed = run_seed(cfg.seed, subject, task);
  auto res = train(tc, model_for(cfg, all), data.train, data.val, init, observer);
  if (task == TaskId::Pretrain && init == nullptr) res.checkpoint.source = CheckpointSource::Pretrained;
  return res;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

TrainResult train_row(const ManifestRow& row, const ProtocolConfig& cfg, const Checkpoint* init,
                      const TrainObserver& observer) {
  return train_windows(row_windows(row, cfg), row.subject, row.task, cfg, init, observer);
}

MetricRow evaluate(const Checkpoint& ckpt, const WindowSet& test_ws) {
  if (test_ws.n_channels() != ckpt.config.n_channels || test_ws.window_len() != ckpt.config.window_len) {
    throw DataError("checkpoint config does not match the test windows");
  }
  if (test_ws.empty()) throw DataError("empty test split");
  const auto probs = predict(ckpt.config, ckpt.params, test_ws);
  MetricRow row = score(probs, test_ws.soft_labels());
  row.subject = test_ws.subject_id();
  row.test_task = test_ws.task();
  return row;
}

std::string checkpoint_filename(const std::string& subject, TaskId task, Mode mode) {
  return subject + "_" + std::string(task_name(task)) + "_" + std::string(mode_name(mode)) + ".megc";
}

CrossTaskResult crosstask_matrix(const Manifest& manifest, const std::filesystem::path& ckpt_dir,
                                 const ProtocolConfig& cfg) {
  CrossTaskResult out;
  for (const auto& subject : manifest.target_subjects()) {
    std::map<TaskId, WindowSet> tests;
    for (TaskId t : kTargetTasks) {
      const auto* row = manifest.find(subject, t);
      if (!row) {
        out.warnings.push_back(subject + ": no " + std::string(task_name(t)) + " recording");
        continue;
      }
      tests.emplace(t, prepare_test_windows(row_windows(*row, cfg), split_seed(cfg.seed, subject, t)));
    }
    for (Mode mode : {Mode::Scratch, Mode::Transfer}) {
      for (TaskId tr : kTargetTasks) {
        const auto path = ckpt_dir / checkpoint_filename(subject, tr, mode);
        if (!std::filesystem::exists(path)) {
          out.warnings.push_back("missing checkpoint " + path.filename().string());
          continue;
        }
        const auto ckpt = read_checkpoint(path);
        for (TaskId te : kTargetTasks) {
          const auto it = tests.find(te);
          if (it == tests.end()) continue;
          MetricRow row = evaluate(ckpt, it->second);
          row.train_task = tr;
          row.mode = mode;
          out.rows.push_back(std::move(row));
        }
      }
    }
  }
  return out;
}

PipelineResult run_pipeline(const Manifest& manifest, const ProtocolConfig& cfg, const std::filesystem::path& out_dir,
                            const PipelineLog& log) {
  auto info = [&](const std::string& s) {
    if (log.info) log.info(s);
  };
  const auto* pre_row = manifest.pretrain_row();
  if (!pre_row) throw DataError("manifest has no pretrain row");
  std::filesystem::create_directories(out_dir / "checkpoints");
  const auto ckpt_dir = out_dir / "checkpoints";

  info("pretraining on " + pre_row->recording.filename().string());
  const auto pre = train_row(*pre_row, cfg);
  write_checkpoint(pre.checkpoint, ckpt_dir / "pretrained.megc");
  write_history_csv(pre.history, ckpt_dir / "pretrained_history.csv");
  info("pretrained: best epoch " + std::to_string(pre.checkpoint.epoch) + ", val loss " +
       fmt3(pre.checkpoint.val_loss));

  PipelineResult result;
  for (const auto& subject : manifest.target_subjects()) {
    std::map<TaskId, WindowSet> tests;
    std::map<std::pair<TaskId, Mode>, Checkpoint> models;
    for (TaskId t : kTargetTasks) {
      const auto* row = manifest.find(subject, t);
      if (!row) {
        info(subject + ": no " + std::string(task_name(t)) + " recording, skipped");
        continue;
      }
      const WindowSet all = row_windows(*row, cfg);
      tests.emplace(t, prepare_test_windows(all, split_seed(cfg.seed, subject, t)));
      for (Mode mode : {Mode::Scratch, Mode::Transfer}) {
        const auto res =
            train_windows(all, subject, t, cfg, mode == Mode::Transfer ? &pre.checkpoint : nullptr, {});
        const auto stem = checkpoint_filename(subject, t, mode);
        write_checkpoint(res.checkpoint, ckpt_dir / stem);
        write_history_csv(res.history, ckpt_dir / (stem.substr(0, stem.size() - 5) + "_history.csv"));
        info(subject + " " + std::string(task_name(t)) + " " + std::string(mode_name(mode)) + ": best epoch " +
             std::to_string(res.checkpoint.epoch) + "/" + std::to_string(res.history.stopped_epoch) +
             ", val loss " + fmt3(res.checkpoint.val_loss));
        models.emplace(std::pair{t, mode}, res.checkpoint);
      }
    }
    for (Mode mode : {Mode::Scratch, Mode::Transfer}) {
      for (TaskId tr : kTargetTasks) {
        const auto m = models.find({tr, mode});
        if (m == models.end()) continue;
        for (TaskId te : kTargetTasks) {
          const auto it = tests.find(te);
          if (it == tests.end()) continue;
          MetricRow row = evaluate(m->second, it->second);
          row.train_task = tr;
          row.mode = mode;
          result.rows.push_back(std::move(row));
        }
      }
    }
  }
  write_results_csv(result.rows, out_dir / "results.csv");
  result.stats = run_stats(result.rows, cfg.signflip_iters, cfg.seed);
  write_stats_outputs(result.rows, result.stats, out_dir / "stats.csv");
  return result;
}

}  // namespace megtl
