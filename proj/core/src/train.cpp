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

#include "megtl/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "megtl/error.hpp"
#include "megtl/rng.hpp"

namespace megtl {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be >= 0");
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0,1)");
  }
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
}

template <typename T>
void adamw_step(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state,
                const TrainConfig& cfg, std::size_t t) {
  if (t < 1) throw InvalidArgument("AdamW step index starts at 1");
  if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v)) {
    throw InvalidArgument("AdamW: parameter, gradient and state layouts differ");
  }
  for (const auto& g : grads) {
    for (T v : g.values) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient in '" + g.name + "'");
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
  const T step = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].values;
    const auto& g = grads[i].values;
    auto& m = state.m[i].values;
    auto& v = state.v[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T{1} - b1) * g[k];
      v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
      p[k] *= decay;
      p[k] -= step * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

template void adamw_step(ParameterSet<float>&, const ParameterSet<float>&, AdamState<float>&,
                         const TrainConfig&, std::size_t);
template void adamw_step(ParameterSet<double>&, const ParameterSet<double>&, AdamState<double>&,
                         const TrainConfig&, std::size_t);

template <typename T>
double clip_grad_norm(ParameterSet<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (T v : g.values) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& g : grads) {
      for (T& v : g.values) v *= scale;
    }
  }
  return norm;
}

template double clip_grad_norm(ParameterSet<float>&, double);
template double clip_grad_norm(ParameterSet<double>&, double);

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  return std::string(buf, res.ptr);
}

Batch<float> make_batch(const WindowSet& ws, std::span<const std::size_t> idx) {
  Batch<float> b;
  b.n_channels = ws.n_channels();
  b.window_len = ws.window_len();
  b.examples.reserve(idx.size());
  for (std::size_t i : idx) b.examples.push_back(ws.window(i));
  return b;
}

}  // namespace

std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,val_loss,is_best\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + ',' + fmt(e.train_loss) + ',' + fmt(e.val_loss) + ',' +
           (e.epoch == h.best_epoch ? "1" : "0") + '\n';
  }
  return out;
}

void write_history_csv(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << history_csv(h);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<float> predict(const ModelConfig& cfg, const Parameters& params, const WindowSet& ws,
                           std::size_t batch_size) {
  std::vector<float> out;
  out.reserve(ws.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ws.size(); start += batch_size) {
    const std::size_t end = std::min(ws.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto probs = forward(cfg, params, make_batch(ws, idx));
    out.insert(out.end(), probs.begin(), probs.end());
  }
  return out;
}

double mean_loss(const ModelConfig& cfg, const Parameters& params, const WindowSet& ws,
                 std::size_t batch_size) {
  if (ws.empty()) throw DataError("mean_loss on an empty window set");
  const auto probs = predict(cfg, params, ws, batch_size);
  // Double accumulation so the result does not depend on the batch size.
  const std::vector<double> p(probs.begin(), probs.end());
  const std::vector<double> y(ws.soft_labels().begin(), ws.soft_labels().end());
  return loss_bce_soft<double>(p, y);
}

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const WindowSet& train_ws,
                  const WindowSet& val_ws, const Checkpoint* init, const TrainObserver& observer) {
  cfg.validate();
  model_cfg.validate();
  if (train_ws.empty() || val_ws.empty()) throw DataError("training needs non-empty train and val sets");
  for (const WindowSet* ws : {&train_ws, &val_ws}) {
    if (ws->n_channels() != model_cfg.n_channels || ws->window_len() != model_cfg.window_len) {
      throw DataError("window shape does not match the model config");
    }
  }

  Parameters params;
  if (init != nullptr) {
    if (!(init->config == model_cfg) || !matches_layout(model_cfg, init->params)) {
      throw DataError("initial checkpoint does not match the model config");
    }
    params = init->params;
  } else {
    params = init_params(model_cfg, mix64(cfg.seed, stable_hash("init")));
  }

  TrainResult result;
  auto& hist = result.history;
  auto& best = result.checkpoint;
  best.config = model_cfg;
  best.seed = cfg.seed;
  best.source = init ? CheckpointSource::FineTuned : CheckpointSource::Scratch;
  best.params = params;
  best.epoch = 0;
  hist.initial_val_loss = mean_loss(model_cfg, params, val_ws);
  best.val_loss = hist.initial_val_loss;

  AdamState<float> state = AdamState<float>::like(params);
  EarlyStopping stopper(cfg.patience);
  Rng order_rng(mix64(cfg.seed, stable_hash("order")));
  const std::uint64_t dropout_base = mix64(cfg.seed, stable_hash("dropout"));
  std::vector<std::size_t> order(train_ws.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<float> labels;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    std::uint64_t digest = stable_hash("epoch");
    for (std::size_t i : order) digest = mix64(digest, i);
    hist.order_digests.push_back(digest);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.clear();
      for (std::size_t i : idx) labels.push_back(train_ws.soft_labels()[i]);
      ++step;
      ForwardOptions opts;
      opts.train_mode = true;
      opts.dropout_seed = mix64(dropout_base, step);
      auto res = backward<float>(model_cfg, params, make_batch(train_ws, idx), labels, opts);
      if (!std::isfinite(res.loss)) throw NumericError("non-finite training loss");
      clip_grad_norm(res.grads, cfg.grad_clip_norm);
      adamw_step(params, res.grads, state, cfg, step);
      loss_sum += static_cast<double>(res.loss) * static_cast<double>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = mean_loss(model_cfg, params, val_ws);
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss");
    hist.epochs.push_back(rec);
    hist.stopped_epoch = epoch;

    const bool improved = stopper.update(epoch, rec.val_loss);
    if (improved) {
      best.params = params;
      best.epoch = epoch;
      best.val_loss = rec.val_loss;
    }
    if (observer.on_epoch) observer.on_epoch(rec, improved);
    if (stopper.should_stop()) break;
  }
  hist.best_epoch = stopper.best_epoch();
  return result;
}

}  // namespace megtl
