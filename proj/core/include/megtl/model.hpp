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

// Compact Conformer binary classifier over raw sensor windows.
//
//   x [C][T] -> per-timestep linear C->d -> + positional table
//     -> n_blocks x { x += 0.5 FFN(LN x)
//                     x += MHSA(LN x)
//                     x += ConvModule(LN x)
//                     x += 0.5 FFN(LN x)
//                     x  = LN x }
//     -> mean over time -> linear d->1 -> logistic
//
// FFN(z)        = W2 drop(swish(W1 z + b1)) + b2, then dropout
// ConvModule(z) = pw2(swish(LN(depthwise_k(GLU(pw1 z))))), then dropout
//
// Forward and backward are written out per layer; they are instantiated for
// float (training) and double (gradient verification).

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace megtl {

struct ModelConfig {
  std::size_t n_channels = 306;
  std::size_t d_model = 64;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_expansion = 4;
  std::size_t conv_kernel = 9;
  double dropout = 0.1;
  std::size_t window_len = 125;

  /// Throws InvalidArgument when an invariant is broken.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using Shape = std::vector<std::size_t>;

template <typename T>
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<T> values;

  std::size_t numel() const noexcept { return values.size(); }
};

/// Ordered list of named tensors. Order is part of the checkpoint format.
template <typename T>
class ParameterSet {
 public:
  void add(std::string name, Shape shape, std::vector<T> values);
  /// Same names and shapes as `like`, every value zero.
  static ParameterSet zeros_like(const ParameterSet& like);

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t numel() const noexcept;
  NamedTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
  const NamedTensor<T>* find(const std::string& name) const;
  NamedTensor<T>* find(const std::string& name);

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& t : tensors_) {
      out.add(t.name, t.shape, std::vector<U>(t.values.begin(), t.values.end()));
    }
    return out;
  }

  /// True when names and shapes agree tensor by tensor.
  bool same_layout(const ParameterSet& other) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.tensors_.size() == b.tensors_.size() && [&] {
      for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
        const auto& x = a.tensors_[i];
        const auto& y = b.tensors_[i];
        if (x.name != y.name || x.shape != y.shape || x.values != y.values) return false;
      }
      return true;
    }();
  }

 private:
  std::vector<NamedTensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Parameters = ParameterSet<float>;

/// Names and shapes of every trainable tensor, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg);

/// True when `params` has exactly the tensors parameter_layout(cfg) declares.
template <typename T>
bool matches_layout(const ModelConfig& cfg, const ParameterSet<T>& params) {
  const auto layout = parameter_layout(cfg);
  if (layout.size() != params.size()) return false;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].first != params[i].name || layout[i].second != params[i].shape) return false;
  }
  return true;
}

/// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
/// biases, unit layer-norm gains, sinusoidal positional table.
Parameters init_params(const ModelConfig& cfg, std::uint64_t seed);

/// A batch of windows, each [C][T] channel-major and contiguous.
template <typename T>
struct Batch {
  std::size_t n_channels = 0;
  std::size_t window_len = 0;
  std::vector<std::span<const T>> examples;

  std::size_t size() const noexcept { return examples.size(); }
};

struct ForwardOptions {
  bool train_mode = false;
  std::uint64_t dropout_seed = 0;
  /// Added to each example's position when deriving its dropout stream, so
  /// the masks of a sub-batch match those of the full batch.
  std::size_t example_offset = 0;
};

/// Probabilities in (0,1), one per example.
template <typename T>
std::vector<T> forward(const ModelConfig& cfg, const ParameterSet<T>& params, const Batch<T>& batch,
                       const ForwardOptions& opts = {});

/// Mean binary cross-entropy against soft targets, p clamped to [1e-7, 1-1e-7].
template <typename T>
T loss_bce_soft(std::span<const T> probs, std::span<const T> soft_labels);

template <typename T>
struct GradientResult {
  T loss{};
  std::vector<T> probs;
  ParameterSet<T> grads;
};

/// Exact reverse-mode gradient of loss_bce_soft(forward(...)) with respect to
/// every parameter tensor.
template <typename T>
GradientResult<T> backward(const ModelConfig& cfg, const ParameterSet<T>& params,
                           const Batch<T>& batch, std::span<const T> soft_labels,
                           const ForwardOptions& opts = {});

}  // namespace megtl
