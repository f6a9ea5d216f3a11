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

#include "megtl/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "megtl/error.hpp"
#include "megtl/rng.hpp"

namespace megtl {

void ModelConfig::validate() const {
  if (n_channels == 0 || d_model == 0 || n_heads == 0 || window_len == 0 ||
      ffn_expansion == 0) {
    throw InvalidArgument("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw InvalidArgument("d_model must be divisible by n_heads");
  if (conv_kernel % 2 == 0) throw InvalidArgument("conv_kernel must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0,1)");
}

// --- ParameterSet -----------------------------------------------------------

template <typename T>
void ParameterSet<T>::add(std::string name, Shape shape, std::vector<T> values) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != values.size()) throw InvalidArgument("tensor '" + name + "' size does not match shape");
  if (index_.count(name) != 0) throw InvalidArgument("duplicate tensor name '" + name + "'");
  index_.emplace(name, tensors_.size());
  tensors_.push_back({std::move(name), std::move(shape), std::move(values)});
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like(const ParameterSet& like) {
  ParameterSet out;
  for (const auto& t : like) out.add(t.name, t.shape, std::vector<T>(t.numel(), T{0}));
  return out;
}

template <typename T>
std::size_t ParameterSet<T>::numel() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <typename T>
const NamedTensor<T>* ParameterSet<T>::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

template <typename T>
NamedTensor<T>* ParameterSet<T>::find(const std::string& name) {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

template <typename T>
bool ParameterSet<T>::same_layout(const ParameterSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors_[i].name != other.tensors_[i].name || tensors_[i].shape != other.tensors_[i].shape) {
      return false;
    }
  }
  return true;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

// --- layout and init --------------------------------------------------------

namespace {

// Tensor counts per sub-module; indices below follow parameter_layout().
constexpr std::size_t kFfnTensors = 6;
constexpr std::size_t kAttnTensors = 10;
constexpr std::size_t kConvTensors = 10;
constexpr std::size_t kBlockTensors = 2 * kFfnTensors + kAttnTensors + kConvTensors + 2;
constexpr std::size_t kStemTensors = 3;

void add_ffn_layout(std::vector<std::pair<std::string, Shape>>& out, const std::string& p,
                    std::size_t d, std::size_t f) {
  out.push_back({p + "norm.gain", {d}});
  out.push_back({p + "norm.bias", {d}});
  out.push_back({p + "fc1.weight", {d, f}});
  out.push_back({p + "fc1.bias", {f}});
  out.push_back({p + "fc2.weight", {f, d}});
  out.push_back({p + "fc2.bias", {d}});
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t C = cfg.n_channels, d = cfg.d_model, f = cfg.d_model * cfg.ffn_expansion;
  std::vector<std::pair<std::string, Shape>> out;
  out.push_back({"input.weight", {C, d}});
  out.push_back({"input.bias", {d}});
  out.push_back({"pos_table", {cfg.window_len, d}});
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add_ffn_layout(out, p + "ffn1.", d, f);
    out.push_back({p + "attn.norm.gain", {d}});
    out.push_back({p + "attn.norm.bias", {d}});
    for (const char* n : {"q", "k", "v", "o"}) {
      out.push_back({p + "attn." + n + ".weight", {d, d}});
      out.push_back({p + "attn." + n + ".bias", {d}});
    }
    out.push_back({p + "conv.norm.gain", {d}});
    out.push_back({p + "conv.norm.bias", {d}});
    out.push_back({p + "conv.pw1.weight", {d, 2 * d}});
    out.push_back({p + "conv.pw1.bias", {2 * d}});
    out.push_back({p + "conv.dw.weight", {cfg.conv_kernel, d}});
    out.push_back({p + "conv.dw.bias", {d}});
    out.push_back({p + "conv.ln.gain", {d}});
    out.push_back({p + "conv.ln.bias", {d}});
    out.push_back({p + "conv.pw2.weight", {d, d}});
    out.push_back({p + "conv.pw2.bias", {d}});
    add_ffn_layout(out, p + "ffn2.", d, f);
    out.push_back({p + "out_norm.gain", {d}});
    out.push_back({p + "out_norm.bias", {d}});
  }
  out.push_back({"head.weight", {d, 1}});
  out.push_back({"head.bias", {1}});
  return out;
}

Parameters init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(mix64(seed, stable_hash("init_params")));
  Parameters params;
  for (auto& [name, shape] : parameter_layout(cfg)) {
    const std::size_t n =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    std::vector<float> v(n, 0.0f);
    const auto ends_with = [&](std::string_view s) {
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (name == "pos_table") {
      const std::size_t d = shape[1];
      for (std::size_t t = 0; t < shape[0]; ++t) {
        for (std::size_t i = 0; i < d; i += 2) {
          const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
          v[t * d + i] = static_cast<float>(std::sin(static_cast<double>(t) * freq));
          if (i + 1 < d) v[t * d + i + 1] = static_cast<float>(std::cos(static_cast<double>(t) * freq));
        }
      }
    } else if (ends_with(".gain")) {
      std::fill(v.begin(), v.end(), 1.0f);
    } else if (ends_with(".weight")) {
      // Linear weights are [fan_in, fan_out]; the depthwise kernel is [K, d]
      // with fan-in K.
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    }
    params.add(name, shape, std::move(v));
  }
  return params;
}

// --- forward / backward -----------------------------------------------------

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using MMap = Eigen::Map<Mat<T>>;
template <typename T>
using CRowMap = Eigen::Map<const RowVec<T>>;
template <typename T>
using MRowMap = Eigen::Map<RowVec<T>>;

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// Parameter tensor pointer with its 2-D view dimensions.
template <typename T>
struct Slot {
  T* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

template <typename T, typename Set>
std::vector<Slot<T>> slots_of(Set& set) {
  std::vector<Slot<T>> out;
  out.reserve(set.size());
  for (auto& t : set) {
    Slot<T> s;
    s.data = const_cast<T*>(t.values.data());
    s.rows = static_cast<Eigen::Index>(t.shape[0]);
    s.cols = t.shape.size() > 1 ? static_cast<Eigen::Index>(t.shape[1]) : 1;
    if (t.shape.size() == 1) std::swap(s.rows, s.cols);  // vectors map as 1 x n
    out.push_back(s);
  }
  return out;
}

template <typename T>
CMap<T> cm(const Slot<T>& s) {
  return CMap<T>(s.data, s.rows, s.cols);
}
template <typename T>
MMap<T> mm(const Slot<T>& s) {
  return MMap<T>(s.data, s.rows, s.cols);
}
template <typename T>
CRowMap<T> crow(const Slot<T>& s) {
  return CRowMap<T>(s.data, s.rows * s.cols);
}
template <typename T>
MRowMap<T> mrow(const Slot<T>& s) {
  return MRowMap<T>(s.data, s.rows * s.cols);
}

/// Column sums accumulated row by row. Eigen's vectorized reductions pick
/// their summation order from the destination's address, which for parameter
/// storage varies between runs; a fixed order keeps training bit-reproducible.
template <typename T, typename Derived>
RowVec<T> col_sum(const Eigen::MatrixBase<Derived>& m) {
  RowVec<T> s = RowVec<T>::Zero(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) s += m.row(r);
  return s;
}

template <typename T>
struct LnCache {
  Mat<T> xhat;
  ColVec<T> rstd;
};

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Slot<T>& gain, const Slot<T>& bias, LnCache<T>* cache) {
  const auto d = static_cast<T>(x.cols());
  const ColVec<T> mean = x.rowwise().sum() / d;
  Mat<T> xc = x.colwise() - mean;
  const ColVec<T> var = xc.cwiseAbs2().rowwise().sum() / d;
  const ColVec<T> rstd = (var.array() + T(kLayerNormEps)).rsqrt();
  xc = xc.array().colwise() * rstd.array();
  Mat<T> y = (xc.array().rowwise() * crow(gain).array()).rowwise() + crow(bias).array();
  if (cache) {
    cache->xhat = std::move(xc);
    cache->rstd = rstd;
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LnCache<T>& c, const Slot<T>& gain,
                           const Slot<T>& dgain, const Slot<T>& dbias) {
  mrow(dgain) += col_sum<T>(dy.cwiseProduct(c.xhat));
  mrow(dbias) += col_sum<T>(dy);
  const auto d = static_cast<T>(dy.cols());
  const Mat<T> dxhat = dy.array().rowwise() * crow(gain).array();
  const ColVec<T> m1 = dxhat.rowwise().sum() / d;
  const ColVec<T> m2 = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix() / d;
  Mat<T> dx = (dxhat.colwise() - m1) - (c.xhat.array().colwise() * m2.array()).matrix();
  return dx.array().colwise() * c.rstd.array();
}

template <typename T>
Mat<T> linear(const Mat<T>& x, const Slot<T>& w, const Slot<T>& b) {
  Mat<T> y(x.rows(), w.cols);
  y.noalias() = x * cm(w);
  y.rowwise() += crow(b);
  return y;
}

/// Accumulates weight/bias gradients and returns dL/dx.
template <typename T>
Mat<T> linear_backward(const Mat<T>& x, const Mat<T>& dy, const Slot<T>& w, const Slot<T>& dw,
                       const Slot<T>& db) {
  const Mat<T> dw_step = x.transpose() * dy;  // aligned temporary, see col_sum
  mm(dw) += dw_step;
  mrow(db) += col_sum<T>(dy);
  Mat<T> dx(dy.rows(), w.rows);
  dx.noalias() = dy * cm(w).transpose();
  return dx;
}

template <typename T>
Mat<T> swish(const Mat<T>& x) {
  return x.unaryExpr([](T v) { return v * sigmoid(v); });
}

template <typename T>
Mat<T> swish_grad(const Mat<T>& x) {
  return x.unaryExpr([](T v) {
    const T s = sigmoid(v);
    return s * (T{1} + v * (T{1} - s));
  });
}

/// Inverted-dropout mask, 0 with probability p and 1/(1-p) otherwise. Rows are
/// split evenly across examples; example e draws from its own stream, two
/// 32-bit decisions per 64-bit draw. Empty when inactive.
template <typename T>
Mat<T> dropout_mask(std::vector<Rng>* rngs, double p, Eigen::Index rows, Eigen::Index cols) {
  if (rngs == nullptr || p <= 0.0) return {};
  Mat<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  const auto threshold = static_cast<std::uint64_t>(p * 4294967296.0);
  const Eigen::Index per = m.size() / static_cast<Eigen::Index>(rngs->size());
  for (std::size_t e = 0; e < rngs->size(); ++e) {
    Rng& rng = (*rngs)[e];
    T* dst = m.data() + static_cast<Eigen::Index>(e) * per;
    std::uint64_t bits = 0;
    for (Eigen::Index j = 0; j < per; ++j) {
      if ((j & 1) == 0) bits = rng.next_u64();
      const std::uint64_t u = (j & 1) ? (bits >> 32) : (bits & 0xFFFFFFFFULL);
      dst[j] = u < threshold ? T{0} : keep;
    }
  }
  return m;
}

template <typename T>
void apply_mask(Mat<T>& x, const Mat<T>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

template <typename T>
struct FfnCache {
  LnCache<T> ln;
  Mat<T> z, h, a, mask1, mask2;
};

template <typename T>
struct AttnCache {
  LnCache<T> ln;
  Mat<T> z, q, k, v, o, mask;
  std::vector<Mat<T>> probs;  // [example * n_heads + head]
};

template <typename T>
struct ConvCache {
  LnCache<T> ln, ln2;
  Mat<T> z, lin, gate, glu, s, act, mask;
};

template <typename T>
struct BlockCache {
  FfnCache<T> ffn1, ffn2;
  AttnCache<T> attn;
  ConvCache<T> conv;
  LnCache<T> out;
};

template <typename T>
struct NetCache {
  std::vector<BlockCache<T>> blocks;
  Mat<T> pooled;  // [B][d]
};

/// Activations of a batch are stacked as (B * T) x d; example e owns rows
/// [e T, (e + 1) T). Row-wise layers run on the whole stack, attention and
/// the depthwise convolution run per example.
template <typename T>
class Conformer {
 public:
  Conformer(const ModelConfig& cfg, std::vector<Slot<T>> params)
      : cfg_(cfg), p_(std::move(params)), Tn_(static_cast<Eigen::Index>(cfg.window_len)) {}

  ColVec<T> logits(const Batch<T>& batch, std::vector<Rng>* rngs, NetCache<T>* cache) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    const auto C = static_cast<Eigen::Index>(cfg_.n_channels);
    Mat<T> h(B * Tn_, static_cast<Eigen::Index>(cfg_.d_model));
    for (Eigen::Index e = 0; e < B; ++e) {
      const CMap<T> xct(batch.examples[static_cast<std::size_t>(e)].data(), C, Tn_);
      h.middleRows(e * Tn_, Tn_).noalias() = xct.transpose() * cm(p_[0]);
      h.middleRows(e * Tn_, Tn_) += cm(p_[2]);
    }
    h.rowwise() += crow(p_[1]);

    if (cache) cache->blocks.resize(cfg_.n_blocks);
    for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
      h = block_forward(b, h, rngs, cache ? &cache->blocks[b] : nullptr);
    }
    Mat<T> pooled(B, h.cols());
    for (Eigen::Index e = 0; e < B; ++e) pooled.row(e) = col_sum<T>(h.middleRows(e * Tn_, Tn_)) / static_cast<T>(Tn_);
    ColVec<T> z = pooled * cm(head_w());
    z.array() += crow(head_b())(0);
    if (cache) cache->pooled = std::move(pooled);
    return z;
  }

  /// Accumulates dL/dparams into `g` given dL/dlogit per example.
  void backward(const Batch<T>& batch, const ColVec<T>& dlogit, const NetCache<T>& cache,
                const std::vector<Slot<T>>& g) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    const auto C = static_cast<Eigen::Index>(cfg_.n_channels);
    const std::size_t nh = p_.size();
    const Mat<T> dw_head = cache.pooled.transpose() * dlogit;
    mm(g[nh - 2]) += dw_head;
    mrow(g[nh - 1])(0) += dlogit.sum();
    // d pooled / d h spreads each example's gradient evenly over its rows.
    const Mat<T> dpooled = (dlogit * cm(head_w()).transpose()) / static_cast<T>(Tn_);
    Mat<T> dh(B * Tn_, dpooled.cols());
    for (Eigen::Index e = 0; e < B; ++e) dh.middleRows(e * Tn_, Tn_).rowwise() = dpooled.row(e);

    for (std::size_t b = cfg_.n_blocks; b-- > 0;) dh = block_backward(b, dh, cache.blocks[b], g);

    mrow(g[1]) += col_sum<T>(dh);
    for (Eigen::Index e = 0; e < B; ++e) {
      const auto dhe = dh.middleRows(e * Tn_, Tn_);
      mm(g[2]) += dhe;
      const CMap<T> xct(batch.examples[static_cast<std::size_t>(e)].data(), C, Tn_);
      const Mat<T> dw_in = xct * dhe;
      mm(g[0]) += dw_in;
    }
  }

 private:
  const Slot<T>& head_w() const { return p_[p_.size() - 2]; }
  const Slot<T>& head_b() const { return p_[p_.size() - 1]; }
  std::size_t base(std::size_t b) const { return kStemTensors + b * kBlockTensors; }
  Eigen::Index n_examples(const Mat<T>& x) const { return x.rows() / Tn_; }

  Mat<T> ffn_forward(std::size_t i, const Mat<T>& x, std::vector<Rng>* rngs, FfnCache<T>* c) {
    Mat<T> z = layer_norm(x, p_[i], p_[i + 1], c ? &c->ln : nullptr);
    Mat<T> h = linear(z, p_[i + 2], p_[i + 3]);
    Mat<T> a = swish(h);
    Mat<T> m1 = dropout_mask<T>(rngs, cfg_.dropout, a.rows(), a.cols());
    apply_mask(a, m1);
    Mat<T> o = linear(a, p_[i + 4], p_[i + 5]);
    Mat<T> m2 = dropout_mask<T>(rngs, cfg_.dropout, o.rows(), o.cols());
    apply_mask(o, m2);
    if (c) {
      c->z = std::move(z);
      c->h = std::move(h);
      c->a = std::move(a);
      c->mask1 = std::move(m1);
      c->mask2 = std::move(m2);
    }
    o *= T(0.5);
    o += x;
    return o;
  }

  Mat<T> ffn_backward(std::size_t i, const Mat<T>& dout, const FfnCache<T>& c,
                      const std::vector<Slot<T>>& g) {
    Mat<T> dop = T(0.5) * dout;
    apply_mask(dop, c.mask2);
    Mat<T> da = linear_backward(c.a, dop, p_[i + 4], g[i + 4], g[i + 5]);
    apply_mask(da, c.mask1);
    const Mat<T> dh = da.cwiseProduct(swish_grad(c.h));
    const Mat<T> dz = linear_backward(c.z, dh, p_[i + 2], g[i + 2], g[i + 3]);
    return dout + layer_norm_backward(dz, c.ln, p_[i], g[i], g[i + 1]);
  }

  Mat<T> attn_forward(std::size_t i, const Mat<T>& x, std::vector<Rng>* rngs, AttnCache<T>* c) {
    const Eigen::Index B = n_examples(x);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto H = static_cast<Eigen::Index>(cfg_.n_heads);
    const Eigen::Index dh = d / H;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> z = layer_norm(x, p_[i], p_[i + 1], c ? &c->ln : nullptr);
    Mat<T> q = linear(z, p_[i + 2], p_[i + 3]);
    Mat<T> k = linear(z, p_[i + 4], p_[i + 5]);
    Mat<T> v = linear(z, p_[i + 6], p_[i + 7]);
    Mat<T> o(x.rows(), d);
    if (c) c->probs.resize(static_cast<std::size_t>(B * H));
    Mat<T> s(Tn_, Tn_);
    for (Eigen::Index e = 0; e < B; ++e) {
      const Eigen::Index r0 = e * Tn_;
      for (Eigen::Index hd = 0; hd < H; ++hd) {
        s.noalias() = q.block(r0, hd * dh, Tn_, dh) * k.block(r0, hd * dh, Tn_, dh).transpose();
        s *= scale;
        for (Eigen::Index r = 0; r < Tn_; ++r) {
          auto row = s.row(r);
          row.array() = (row.array() - row.maxCoeff()).exp();
          row /= row.sum();
        }
        o.block(r0, hd * dh, Tn_, dh).noalias() = s * v.block(r0, hd * dh, Tn_, dh);
        if (c) c->probs[static_cast<std::size_t>(e * H + hd)] = s;
      }
    }
    Mat<T> out = linear(o, p_[i + 8], p_[i + 9]);
    Mat<T> m = dropout_mask<T>(rngs, cfg_.dropout, out.rows(), out.cols());
    apply_mask(out, m);
    if (c) {
      c->z = std::move(z);
      c->q = std::move(q);
      c->k = std::move(k);
      c->v = std::move(v);
      c->o = std::move(o);
      c->mask = std::move(m);
    }
    out += x;
    return out;
  }

  Mat<T> attn_backward(std::size_t i, const Mat<T>& dout, const AttnCache<T>& c,
                       const std::vector<Slot<T>>& g) {
    const Eigen::Index B = n_examples(dout);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto H = static_cast<Eigen::Index>(cfg_.n_heads);
    const Eigen::Index dh = d / H;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> dm = dout;
    apply_mask(dm, c.mask);
    const Mat<T> dO = linear_backward(c.o, dm, p_[i + 8], g[i + 8], g[i + 9]);
    Mat<T> dq(dout.rows(), d), dk(dout.rows(), d), dv(dout.rows(), d);
    Mat<T> dP(Tn_, Tn_), dS(Tn_, Tn_);
    for (Eigen::Index e = 0; e < B; ++e) {
      const Eigen::Index r0 = e * Tn_;
      for (Eigen::Index hd = 0; hd < H; ++hd) {
        const Mat<T>& P = c.probs[static_cast<std::size_t>(e * H + hd)];
        const auto dOh = dO.block(r0, hd * dh, Tn_, dh);
        dP.noalias() = dOh * c.v.block(r0, hd * dh, Tn_, dh).transpose();
        dv.block(r0, hd * dh, Tn_, dh).noalias() = P.transpose() * dOh;
        const ColVec<T> rs = (dP.array() * P.array()).rowwise().sum();
        dS = (P.array() * (dP.array().colwise() - rs.array())).matrix() * scale;
        dq.block(r0, hd * dh, Tn_, dh).noalias() = dS * c.k.block(r0, hd * dh, Tn_, dh);
        dk.block(r0, hd * dh, Tn_, dh).noalias() = dS.transpose() * c.q.block(r0, hd * dh, Tn_, dh);
      }
    }
    Mat<T> dz = linear_backward(c.z, dq, p_[i + 2], g[i + 2], g[i + 3]);
    dz += linear_backward(c.z, dk, p_[i + 4], g[i + 4], g[i + 5]);
    dz += linear_backward(c.z, dv, p_[i + 6], g[i + 6], g[i + 7]);
    return dout + layer_norm_backward(dz, c.ln, p_[i], g[i], g[i + 1]);
  }

  Mat<T> conv_forward(std::size_t i, const Mat<T>& x, std::vector<Rng>* rngs, ConvCache<T>* c) {
    const Eigen::Index B = n_examples(x);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto K = static_cast<Eigen::Index>(cfg_.conv_kernel);
    const Eigen::Index half = K / 2;

    Mat<T> z = layer_norm(x, p_[i], p_[i + 1], c ? &c->ln : nullptr);
    Mat<T> lin = linear(z, p_[i + 2], p_[i + 3]);
    Mat<T> gate = lin.rightCols(d).unaryExpr([](T v) { return sigmoid(v); });
    Mat<T> glu = lin.leftCols(d).cwiseProduct(gate);

    // Depthwise convolution along time with zero padding inside each example.
    const auto w = cm(p_[i + 4]);
    Mat<T> dwo(x.rows(), d);
    dwo.rowwise() = crow(p_[i + 5]);
    for (Eigen::Index e = 0; e < B; ++e) {
      const Eigen::Index r0 = e * Tn_;
      for (Eigen::Index t = 0; t < Tn_; ++t) {
        for (Eigen::Index k = 0; k < K; ++k) {
          const Eigen::Index src = t + k - half;
          if (src < 0 || src >= Tn_) continue;
          dwo.row(r0 + t) += w.row(k).cwiseProduct(glu.row(r0 + src));
        }
      }
    }
    Mat<T> s = layer_norm(dwo, p_[i + 6], p_[i + 7], c ? &c->ln2 : nullptr);
    Mat<T> act = swish(s);
    Mat<T> out = linear(act, p_[i + 8], p_[i + 9]);
    Mat<T> m = dropout_mask<T>(rngs, cfg_.dropout, out.rows(), out.cols());
    apply_mask(out, m);
    if (c) {
      c->z = std::move(z);
      c->lin = std::move(lin);
      c->gate = std::move(gate);
      c->glu = std::move(glu);
      c->s = std::move(s);
      c->act = std::move(act);
      c->mask = std::move(m);
    }
    out += x;
    return out;
  }

  Mat<T> conv_backward(std::size_t i, const Mat<T>& dout, const ConvCache<T>& c,
                       const std::vector<Slot<T>>& g) {
    const Eigen::Index B = n_examples(dout);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto K = static_cast<Eigen::Index>(cfg_.conv_kernel);
    const Eigen::Index half = K / 2;

    Mat<T> dm = dout;
    apply_mask(dm, c.mask);
    const Mat<T> dact = linear_backward(c.act, dm, p_[i + 8], g[i + 8], g[i + 9]);
    const Mat<T> ds = dact.cwiseProduct(swish_grad(c.s));
    const Mat<T> ddw = layer_norm_backward(ds, c.ln2, p_[i + 6], g[i + 6], g[i + 7]);

    mrow(g[i + 5]) += col_sum<T>(ddw);
    const auto w = cm(p_[i + 4]);
    auto gw = mm(g[i + 4]);
    Mat<T> dglu = Mat<T>::Zero(dout.rows(), d);
    for (Eigen::Index e = 0; e < B; ++e) {
      const Eigen::Index r0 = e * Tn_;
      for (Eigen::Index t = 0; t < Tn_; ++t) {
        for (Eigen::Index k = 0; k < K; ++k) {
          const Eigen::Index src = t + k - half;
          if (src < 0 || src >= Tn_) continue;
          dglu.row(r0 + src) += w.row(k).cwiseProduct(ddw.row(r0 + t));
          gw.row(k) += c.glu.row(r0 + src).cwiseProduct(ddw.row(r0 + t));
        }
      }
    }
    Mat<T> dlin(dout.rows(), 2 * d);
    dlin.leftCols(d) = dglu.cwiseProduct(c.gate);
    dlin.rightCols(d) = (dglu.array() * c.lin.leftCols(d).array() * c.gate.array() *
                         (T{1} - c.gate.array()))
                            .matrix();
    const Mat<T> dz = linear_backward(c.z, dlin, p_[i + 2], g[i + 2], g[i + 3]);
    return dout + layer_norm_backward(dz, c.ln, p_[i], g[i], g[i + 1]);
  }

  Mat<T> block_forward(std::size_t b, const Mat<T>& x, std::vector<Rng>* rngs, BlockCache<T>* c) {
    std::size_t i = base(b);
    Mat<T> h = ffn_forward(i, x, rngs, c ? &c->ffn1 : nullptr);
    i += kFfnTensors;
    h = attn_forward(i, h, rngs, c ? &c->attn : nullptr);
    i += kAttnTensors;
    h = conv_forward(i, h, rngs, c ? &c->conv : nullptr);
    i += kConvTensors;
    h = ffn_forward(i, h, rngs, c ? &c->ffn2 : nullptr);
    i += kFfnTensors;
    return layer_norm(h, p_[i], p_[i + 1], c ? &c->out : nullptr);
  }

  Mat<T> block_backward(std::size_t b, const Mat<T>& dy, const BlockCache<T>& c,
                        const std::vector<Slot<T>>& g) {
    const std::size_t i0 = base(b);
    const std::size_t i_attn = i0 + kFfnTensors;
    const std::size_t i_conv = i_attn + kAttnTensors;
    const std::size_t i_ffn2 = i_conv + kConvTensors;
    const std::size_t i_out = i_ffn2 + kFfnTensors;
    Mat<T> dh = layer_norm_backward(dy, c.out, p_[i_out], g[i_out], g[i_out + 1]);
    dh = ffn_backward(i_ffn2, dh, c.ffn2, g);
    dh = conv_backward(i_conv, dh, c.conv, g);
    dh = attn_backward(i_attn, dh, c.attn, g);
    return ffn_backward(i0, dh, c.ffn1, g);
  }

  const ModelConfig& cfg_;
  std::vector<Slot<T>> p_;
  Eigen::Index Tn_;
};

template <typename T>
void check_batch(const ModelConfig& cfg, const ParameterSet<T>& params, const Batch<T>& batch) {
  cfg.validate();
  if (!matches_layout(cfg, params)) throw DataError("parameter set does not match model config");
  if (batch.n_channels != cfg.n_channels || batch.window_len != cfg.window_len) {
    throw DataError("batch shape [" + std::to_string(batch.n_channels) + "][" +
                    std::to_string(batch.window_len) + "] does not match model [" +
                    std::to_string(cfg.n_channels) + "][" + std::to_string(cfg.window_len) + "]");
  }
  const std::size_t numel = cfg.n_channels * cfg.window_len;
  for (const auto& ex : batch.examples) {
    if (ex.size() != numel) throw DataError("batch example has the wrong number of values");
    for (T v : ex) {
      if (!std::isfinite(v)) throw DataError("non-finite model input");
    }
  }
}

/// One dropout stream per example, keyed by its position in the full batch.
std::optional<std::vector<Rng>> example_rngs(const ForwardOptions& opts, std::size_t n) {
  if (!opts.train_mode) return std::nullopt;
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rngs.emplace_back(mix64(opts.dropout_seed, opts.example_offset + i));
  return rngs;
}

}  // namespace

template <typename T>
std::vector<T> forward(const ModelConfig& cfg, const ParameterSet<T>& params, const Batch<T>& batch,
                       const ForwardOptions& opts) {
  check_batch(cfg, params, batch);
  if (batch.size() == 0) return {};
  Conformer<T> net(cfg, slots_of<T>(params));
  auto rngs = example_rngs(opts, batch.size());
  const ColVec<T> z = net.logits(batch, rngs ? &*rngs : nullptr, nullptr);
  std::vector<T> out(batch.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(z(static_cast<Eigen::Index>(i)));
  return out;
}

template <typename T>
T loss_bce_soft(std::span<const T> probs, std::span<const T> soft_labels) {
  if (probs.size() != soft_labels.size()) throw InvalidArgument("loss: length mismatch");
  if (probs.empty()) throw InvalidArgument("loss: empty batch");
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  T total{0};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const T y = soft_labels[i];
    if (!(y >= T{0} && y <= T{1})) throw InvalidArgument("loss: soft label outside [0,1]");
    const T p = std::clamp(probs[i], lo, hi);
    total -= y * std::log(p) + (T{1} - y) * std::log(T{1} - p);
  }
  return total / static_cast<T>(probs.size());
}

template <typename T>
GradientResult<T> backward(const ModelConfig& cfg, const ParameterSet<T>& params,
                           const Batch<T>& batch, std::span<const T> soft_labels,
                           const ForwardOptions& opts) {
  check_batch(cfg, params, batch);
  if (soft_labels.size() != batch.size()) throw InvalidArgument("backward: label count mismatch");
  if (batch.size() == 0) throw InvalidArgument("backward: empty batch");

  GradientResult<T> res;
  res.grads = ParameterSet<T>::zeros_like(params);
  Conformer<T> net(cfg, slots_of<T>(params));
  const auto gslots = slots_of<T>(res.grads);
  const T inv_b = T(1) / static_cast<T>(batch.size());
  const T lo = T(1e-7), hi = T(1) - T(1e-7);

  auto rngs = example_rngs(opts, batch.size());
  NetCache<T> cache;
  const ColVec<T> z = net.logits(batch, rngs ? &*rngs : nullptr, &cache);
  ColVec<T> dz(z.size());
  res.probs.resize(batch.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const T p = sigmoid(z(i));
    res.probs[static_cast<std::size_t>(i)] = p;
    // d/dz of the clamped BCE: (p - y) inside the clamp range, 0 outside.
    dz(i) = (p >= lo && p <= hi) ? (p - soft_labels[static_cast<std::size_t>(i)]) * inv_b : T{0};
  }
  net.backward(batch, dz, cache, gslots);
  res.loss = loss_bce_soft<T>(res.probs, soft_labels);
  return res;
}

template std::vector<float> forward(const ModelConfig&, const ParameterSet<float>&,
                                    const Batch<float>&, const ForwardOptions&);
template std::vector<double> forward(const ModelConfig&, const ParameterSet<double>&,
                                     const Batch<double>&, const ForwardOptions&);
template float loss_bce_soft(std::span<const float>, std::span<const float>);
template double loss_bce_soft(std::span<const double>, std::span<const double>);
template GradientResult<float> backward(const ModelConfig&, const ParameterSet<float>&,
                                        const Batch<float>&, std::span<const float>,
                                        const ForwardOptions&);
template GradientResult<double> backward(const ModelConfig&, const ParameterSet<double>&,
                                         const Batch<double>&, std::span<const double>,
                                         const ForwardOptions&);

}  // namespace megtl
