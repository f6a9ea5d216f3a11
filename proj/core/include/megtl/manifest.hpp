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


// Manifest CSV: one (subject, task) recording per row.
//
//   # key=value          optional metadata lines, before the header
//   subject,task,recording,vad
//   sub01,listen,sub01_listen.megr,sub01_listen.vad
//
// Relative paths resolve against the manifest's directory.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "megtl/signal.hpp"

namespace megtl {

struct ManifestRow {
  std::string subject;
  TaskId task = TaskId::Listen;
  std::filesystem::path recording;
  std::filesystem::path vad;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::map<std::string, std::string> metadata;

  const ManifestRow* find(const std::string& subject, TaskId task) const;
  /// Subjects in first-appearance order, excluding rows whose task is Pretrain.
  std::vector<std::string> target_subjects() const;
  /// The first Pretrain row, if any.
  const ManifestRow* pretrain_row() const;
};

inline constexpr std::string_view kManifestHeader = "subject,task,recording,vad";

/// Throws FormatError on bad syntax or duplicate (subject, task), IoError when
/// a referenced file does not exist.
Manifest read_manifest(const std::filesystem::path& path);
/// Paths are written as given (callers pass paths relative to the manifest).
void write_manifest(const Manifest& m, const std::filesystem::path& path);

}  // namespace megtl
