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

// MEGC checkpoint file, all integers little-endian:
//   "MEGC" | u32 version=1 | u32 metadata_len | metadata (UTF-8 key=value lines)
//   | u32 n_tensors | per tensor: u16 name_len, name, u8 ndim, u64 dims[ndim],
//   f32 payload

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "megtl/model.hpp"

namespace megtl {

enum class CheckpointSource { Scratch, Pretrained, FineTuned };

std::string_view source_name(CheckpointSource s);
std::optional<CheckpointSource> parse_source(std::string_view s);

struct Checkpoint {
  ModelConfig config;
  Parameters params;
  std::size_t epoch = 0;
  double val_loss = 0.0;
  std::uint64_t seed = 0;
  CheckpointSource source = CheckpointSource::Scratch;
};

/// The metadata block exactly as written to disk.
std::string checkpoint_metadata(const Checkpoint& ckpt);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Verifies the tensor layout against the config stored in the metadata.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace megtl
