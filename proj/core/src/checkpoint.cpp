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

#include "megtl/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "megtl/error.hpp"

namespace megtl {

namespace {

constexpr std::uint32_t kVersion = 1;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void malformed(const std::string& origin, const std::string& what) {
  throw FormatError(FormatError::Kind::Malformed, origin + ": " + what);
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& kv, const std::string& key,
               const std::string& origin) {
  const auto it = kv.find(key);
  if (it == kv.end()) malformed(origin, "metadata is missing '" + key + "'");
  T value{};
  const auto& s = it->second;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    malformed(origin, "metadata '" + key + "' is not a number");
  }
  return value;
}

}  // namespace

std::string_view source_name(CheckpointSource s) {
  switch (s) {
    case CheckpointSource::Scratch: return "scratch";
    case CheckpointSource::Pretrained: return "pretrained";
    case CheckpointSource::FineTuned: return "finetuned";
  }
  return "unknown";
}

std::optional<CheckpointSource> parse_source(std::string_view s) {
  for (auto v : {CheckpointSource::Scratch, CheckpointSource::Pretrained, CheckpointSource::FineTuned}) {
    if (s == source_name(v)) return v;
  }
  return std::nullopt;
}

std::string checkpoint_metadata(const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  std::ostringstream md;
  md << "n_channels=" << c.n_channels << '\n'
     << "d_model=" << c.d_model << '\n'
     << "n_blocks=" << c.n_blocks << '\n'
     << "n_heads=" << c.n_heads << '\n'
     << "ffn_expansion=" << c.ffn_expansion << '\n'
     << "conv_kernel=" << c.conv_kernel << '\n'
     << "dropout=" << format_double(c.dropout) << '\n'
     << "window_len=" << c.window_len << '\n'
     << "epoch=" << ckpt.epoch << '\n'
     << "val_loss=" << format_double(ckpt.val_loss) << '\n'
     << "seed=" << ckpt.seed << '\n'
     << "source=" << source_name(ckpt.source) << '\n';
  return md.str();
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!matches_layout(ckpt.config, ckpt.params)) {
    throw InvalidArgument("checkpoint parameters do not match its config");
  }
  const std::string md = checkpoint_metadata(ckpt);
  detail::ByteWriter out;
  out.bytes("MEGC");
  out.put(kVersion);
  out.put(static_cast<std::uint32_t>(md.size()));
  out.bytes(md);
  out.put(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& t : ckpt.params) {
    if (t.name.size() > 0xFFFF) throw InvalidArgument("tensor name too long");
    out.put(static_cast<std::uint16_t>(t.name.size()));
    out.bytes(t.name);
    out.put(static_cast<std::uint8_t>(t.shape.size()));
    for (auto dim : t.shape) out.put(static_cast<std::uint64_t>(dim));
    out.put_floats(t.values);
  }
  out.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  const std::string origin = path.string();
  in.expect_magic("MEGC");
  if (in.get<std::uint32_t>() != kVersion) {
    throw FormatError(FormatError::Kind::BadVersion, origin + ": unsupported MEGC version");
  }
  const auto md_len = in.get<std::uint32_t>();
  const std::string md = in.get_string(md_len);

  std::map<std::string, std::string> kv;
  std::istringstream lines(md);
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) malformed(origin, "metadata line without '='");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  Checkpoint ckpt;
  auto& c = ckpt.config;
  c.n_channels = parse_number<std::size_t>(kv, "n_channels", origin);
  c.d_model = parse_number<std::size_t>(kv, "d_model", origin);
  c.n_blocks = parse_number<std::size_t>(kv, "n_blocks", origin);
  c.n_heads = parse_number<std::size_t>(kv, "n_heads", origin);
  c.ffn_expansion = parse_number<std::size_t>(kv, "ffn_expansion", origin);
  c.conv_kernel = parse_number<std::size_t>(kv, "conv_kernel", origin);
  c.dropout = parse_number<double>(kv, "dropout", origin);
  c.window_len = parse_number<std::size_t>(kv, "window_len", origin);
  ckpt.epoch = parse_number<std::size_t>(kv, "epoch", origin);
  ckpt.val_loss = parse_number<double>(kv, "val_loss", origin);
  ckpt.seed = parse_number<std::uint64_t>(kv, "seed", origin);
  const auto src = kv.find("source");
  if (src == kv.end() || !parse_source(src->second)) malformed(origin, "bad or missing source");
  ckpt.source = *parse_source(src->second);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    malformed(origin, e.what());
  }

  const auto n_tensors = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = in.get<std::uint16_t>();
    std::string name = in.get_string(name_len);
    const auto ndim = in.get<std::uint8_t>();
    Shape shape(ndim);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      const auto dim = in.get<std::uint64_t>();
      d = static_cast<std::size_t>(dim);
      numel *= dim;
    }
    if (numel > in.remaining() / sizeof(float)) {
      throw FormatError(FormatError::Kind::Truncated, origin + ": truncated tensor payload");
    }
    std::vector<float> values(numel);
    in.get_floats(values);
    for (float v : values) {
      if (!std::isfinite(v)) {
        throw FormatError(FormatError::Kind::NonFinite, origin + ": non-finite value in " + name);
      }
    }
    ckpt.params.add(std::move(name), std::move(shape), std::move(values));
  }
  if (in.remaining() != 0) malformed(origin, "trailing bytes after tensors");

  if (!matches_layout(c, ckpt.params)) malformed(origin, "tensor layout does not match the stored model config");
  return ckpt;
}

}  // namespace megtl
