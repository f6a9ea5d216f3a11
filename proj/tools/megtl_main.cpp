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


// megtl: command-line front end for data synthesis, training, evaluation and
// statistics. Exit codes: 0 success, 1 usage, 2 data or format, 3 numeric.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "megtl/error.hpp"
#include "megtl/protocol.hpp"
#include "megtl/synth.hpp"

namespace fs = std::filesystem;
using namespace megtl;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Model and schedule flags of `train` and `pipeline`. Zero or negative
/// values keep the profile default. In `pipeline`, --lr sets the pretraining
/// and scratch rate; fine-tuning keeps the profile's rate.
struct ModelFlags {
  std::string profile = "full";
  std::size_t d_model = 0, blocks = 0, heads = 0, ffn = 0, batch = 0, patience = 0;
  long max_epochs = -1;
  double lr = -1.0, dropout = -1.0;
  bool no_augment = false;

  void add(CLI::App* app) {
    app->add_option("--profile", profile, "full or compact")->check(CLI::IsMember({"full", "compact"}));
    app->add_flag("--no-augment", no_augment, "disable roll augmentation of the train split");
    app->add_option("--d-model", d_model);
    app->add_option("--blocks", blocks);
    app->add_option("--heads", heads);
    app->add_option("--ffn-expansion", ffn);
    app->add_option("--dropout", dropout);
    app->add_option("--batch-size", batch);
    app->add_option("--patience", patience);
    app->add_option("--max-epochs", max_epochs);
    app->add_option("--lr", lr, "learning rate of the run being launched");
  }

  ProtocolConfig config(std::uint64_t seed) const {
    ProtocolConfig c = profile == "compact" ? ProtocolConfig::compact() : ProtocolConfig{};
    c.seed = seed;
    c.augment = !no_augment;
    if (d_model) c.model.d_model = d_model;
    if (blocks) c.model.n_blocks = blocks;
    if (heads) c.model.n_heads = heads;
    if (ffn) c.model.ffn_expansion = ffn;
    if (dropout >= 0.0) c.model.dropout = dropout;
    for (TrainConfig* t : {&c.pretrain, &c.scratch, &c.finetune}) {
      if (batch) t->batch_size = batch;
      if (patience) t->patience = patience;
      if (max_epochs >= 0) t->max_epochs = static_cast<std::size_t>(max_epochs);
    }
    return c;
  }
};

TaskId parse_task_flag(const std::string& s) {
  const auto t = parse_task(s);
  if (!t) throw InvalidArgument("unknown task '" + s + "'");
  return *t;
}

const ManifestRow& find_row(const Manifest& m, const std::string& subject, TaskId task) {
  const auto* row = m.find(subject, task);
  if (!row) throw DataError("manifest has no row for " + subject + "/" + std::string(task_name(task)));
  return *row;
}

fs::path history_path(const fs::path& ckpt) {
  fs::path p = ckpt;
  p.replace_extension();
  return p.string() + "_history.csv";
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

int cmd_synth(const std::string& preset_name, const fs::path& out, std::uint64_t seed, std::size_t subjects,
              double duration_s, double pretrain_s, std::size_t channels) {
  SynthPreset preset = synth_preset(preset_name);
  if (subjects) preset.n_subjects = subjects;
  if (duration_s > 0) preset.cfg.duration_s = duration_s;
  if (pretrain_s >= 0) preset.pretrain_duration_s = pretrain_s;
  if (channels) {
    preset.cfg.n_channels = channels;
    preset.cfg.n_informative = std::min(preset.cfg.n_informative, channels);
  }
  const auto res = write_synth_dataset(preset, out, seed);
  std::cout << "subject,task,target_fraction,realized_fraction\n";
  for (const auto& s : res.summary) {
    std::printf("%s,%s,%.4f,%.4f\n", s.subject.c_str(), std::string(task_name(s.task)).c_str(), s.target_fraction,
                s.realized_fraction);
  }
  std::cerr << "wrote " << res.manifest_path.string() << "\n";
  return kOk;
}

int cmd_train(const fs::path& manifest_path, const std::string& subject, const std::string& task_s,
              const fs::path& out, const fs::path& init_path, const ModelFlags& flags, std::uint64_t seed) {
  const Manifest m = read_manifest(manifest_path);
  const TaskId task = parse_task_flag(task_s);
  const ManifestRow& row = find_row(m, subject, task);
  ProtocolConfig cfg = flags.config(seed);
  std::optional<Checkpoint> init;
  if (!init_path.empty()) {
    init = read_checkpoint(init_path);
    // The architecture comes from the checkpoint; the data must match it.
    cfg.model = init->config;
  }
  if (flags.lr >= 0.0) (init ? cfg.finetune : task == TaskId::Pretrain ? cfg.pretrain : cfg.scratch).lr = flags.lr;
  TrainObserver obs;
  obs.on_epoch = [](const EpochRecord& e, bool best) {
    std::fprintf(stderr, "epoch %zu train %.5f val %.5f%s\n", e.epoch, e.train_loss, e.val_loss, best ? " *" : "");
  };
  const auto res = train_row(row, cfg, init ? &*init : nullptr, obs);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_checkpoint(res.checkpoint, out);
  write_history_csv(res.history, history_path(out));
  std::printf("%s: source %s, best epoch %zu, val loss %.5f\n", out.string().c_str(),
              std::string(source_name(res.checkpoint.source)).c_str(), res.checkpoint.epoch,
              res.checkpoint.val_loss);
  return kOk;
}

int cmd_eval(const fs::path& manifest_path, const fs::path& ckpt_path, const std::string& subject,
             const std::string& task_s, const std::string& train_task_s, const fs::path& out, const ModelFlags& flags,
             std::uint64_t seed) {
  const Manifest m = read_manifest(manifest_path);
  const TaskId task = parse_task_flag(task_s);
  const ProtocolConfig cfg = flags.config(seed);
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const auto ws = prepare_test_windows(row_windows(find_row(m, subject, task), cfg), split_seed(seed, subject, task));
  MetricRow row = evaluate(ckpt, ws);
  row.train_task = train_task_s.empty() ? task : parse_task_flag(train_task_s);
  row.mode = ckpt.source == CheckpointSource::FineTuned ? Mode::Transfer : Mode::Scratch;
  std::printf("f1_macro %s balanced_accuracy %s auc_macro %s (n=%zu)\n", fmt_opt(row.f1_macro).c_str(),
              fmt_opt(row.balanced_accuracy).c_str(), fmt_opt(row.auc_macro).c_str(), ws.size());
  if (!out.empty()) write_results_csv(std::span<const MetricRow>(&row, 1), out);
  return kOk;
}

int cmd_crosstask(const fs::path& manifest_path, const fs::path& ckpt_dir, const fs::path& out,
                  const ModelFlags& flags, std::uint64_t seed) {
  const Manifest m = read_manifest(manifest_path);
  const auto res = crosstask_matrix(m, ckpt_dir, flags.config(seed));
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_results_csv(res.rows, out);
  std::cout << in_task_table(res.rows) << "\n" << cross_task_table(res.rows);
  std::cerr << res.rows.size() << " rows written to " << out.string() << "\n";
  return kOk;
}

int cmd_stats(const fs::path& results, const fs::path& out, std::size_t iters, std::uint64_t seed) {
  const auto rows = read_results_csv(results);
  const auto report = run_stats(rows, iters, seed);
  if (report.effects.unmatched_rows) {
    std::cerr << "warning: " << report.effects.unmatched_rows << " rows without a partner mode were ignored\n";
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_stats_outputs(rows, report, out);
  std::cout << report_markdown(rows, report);
  return kOk;
}

int cmd_pipeline(const fs::path& manifest_path, const fs::path& out, const ModelFlags& flags, std::uint64_t seed,
                 std::size_t iters) {
  const Manifest m = read_manifest(manifest_path);
  ProtocolConfig cfg = flags.config(seed);
  cfg.signflip_iters = iters;
  if (flags.lr >= 0.0) cfg.pretrain.lr = cfg.scratch.lr = flags.lr;
  const auto res = run_pipeline(m, cfg, out, {[](const std::string& s) { std::cerr << s << "\n"; }});
  std::cout << report_markdown(res.rows, res.stats);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"megtl: speech detection from MEG windows, scratch vs transfer"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "base seed shared by every command of one experiment");

  std::string manifest, out, preset, subject, task, train_task, init, ckpt, ckpt_dir, results;
  std::size_t subjects = 0, channels = 0, iters = kSignflipIters;
  double duration = 0.0, pretrain_duration = -1.0;
  ModelFlags flags;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and manifest");
  synth->add_option("--preset", preset, "easy, chance, transfer or paper-shape")->required();
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--subjects", subjects, "override the preset's subject count");
  synth->add_option("--duration", duration, "override the per-recording duration in seconds");
  synth->add_option("--pretrain-duration", pretrain_duration, "override the pretraining recording length; 0 omits it");
  synth->add_option("--channels", channels, "override the channel count");

  auto* train = app.add_subcommand("train", "train one manifest row");
  train->add_option("--manifest", manifest)->required();
  train->add_option("--subject", subject)->required();
  train->add_option("--task", task)->required();
  train->add_option("--out", out, "checkpoint path; history goes next to it")->required();
  train->add_option("--init", init, "checkpoint to fine-tune from");
  flags.add(train);

  auto* eval = app.add_subcommand("eval", "score a checkpoint on one recording's test split");
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--subject", subject)->required();
  eval->add_option("--task", task, "task whose test split is scored")->required();
  eval->add_option("--train-task", train_task, "recorded in the output row; defaults to --task");
  eval->add_option("--out", out, "optional one-row results CSV");

  auto* cross = app.add_subcommand("crosstask", "3x3 train/test matrix from stored checkpoints");
  cross->add_option("--manifest", manifest)->required();
  cross->add_option("--checkpoints", ckpt_dir, "directory of {subject}_{task}_{mode}.megc")->required();
  cross->add_option("--out", out, "results CSV")->required();

  auto* stats = app.add_subcommand("stats", "paired tests and effect tables from a results CSV");
  stats->add_option("--results", results)->required();
  stats->add_option("--out", out, "stats CSV; side tables are written next to it")->required();
  stats->add_option("--iters", iters, "sign-flip iterations")->check(CLI::PositiveNumber);

  auto* pipeline = app.add_subcommand("pipeline", "pretrain, train every row, cross-task matrix and stats");
  pipeline->add_option("--manifest", manifest)->required();
  pipeline->add_option("--out", out, "output directory")->required();
  pipeline->add_option("--iters", iters, "sign-flip iterations")->check(CLI::PositiveNumber);
  flags.add(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(preset, out, seed, subjects, duration, pretrain_duration, channels);
    if (*train) return cmd_train(manifest, subject, task, out, init, flags, seed);
    if (*eval) return cmd_eval(manifest, ckpt, subject, task, train_task, out, flags, seed);
    if (*cross) return cmd_crosstask(manifest, ckpt_dir, out, flags, seed);
    if (*stats) return cmd_stats(results, out, iters, seed);
    if (*pipeline) return cmd_pipeline(manifest, out, flags, seed, iters);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
