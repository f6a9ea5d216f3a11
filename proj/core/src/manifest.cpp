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


#include "megtl/manifest.hpp"

#include <set>
#include <utility>

#include "csv.hpp"
#include "megtl/error.hpp"

namespace megtl {

const ManifestRow* Manifest::find(const std::string& subject, TaskId task) const {
  for (const auto& r : rows) {
    if (r.subject == subject && r.task == task) return &r;
  }
  return nullptr;
}

std::vector<std::string> Manifest::target_subjects() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (r.task != TaskId::Pretrain && seen.insert(r.subject).second) out.push_back(r.subject);
  }
  return out;
}

const ManifestRow* Manifest::pretrain_row() const {
  for (const auto& r : rows) {
    if (r.task == TaskId::Pretrain) return &r;
  }
  return nullptr;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string origin = path.string();
  const auto lines = detail::text_lines(detail::read_text(path));
  const auto base = path.parent_path();
  Manifest m;
  std::size_t i = 0;
  for (; i < lines.size() && lines[i].starts_with('#'); ++i) {
    std::string_view kv(lines[i]);
    kv.remove_prefix(1);
    while (!kv.empty() && kv.front() == ' ') kv.remove_prefix(1);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    m.metadata[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
  }
  if (i >= lines.size() || lines[i] != kManifestHeader) {
    throw FormatError(FormatError::Kind::Malformed, origin + ": missing manifest header");
  }
  std::set<std::pair<std::string, TaskId>> keys;
  for (++i; i < lines.size(); ++i) {
    const std::string where = origin + ":" + std::to_string(i + 1);
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 4 || f[0].empty()) {
      throw FormatError(FormatError::Kind::Malformed, where + ": expected subject,task,recording,vad");
    }
    const auto task = parse_task(f[1]);
    if (!task) throw FormatError(FormatError::Kind::Malformed, where + ": unknown task '" + f[1] + "'");
    if (!keys.insert({f[0], *task}).second) {
      throw FormatError(FormatError::Kind::Malformed, where + ": duplicate subject/task pair");
    }
    ManifestRow row{f[0], *task, base / f[2], base / f[3]};
    for (const auto& p : {row.recording, row.vad}) {
      if (!std::filesystem::exists(p)) throw IoError(where + ": missing file " + p.string());
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [k, v] : m.metadata) out += "# " + k + "=" + v + "\n";
  out += kManifestHeader;
  out += '\n';
  for (const auto& r : m.rows) {
    out += r.subject + ',' + std::string(task_name(r.task)) + ',' + r.recording.generic_string() + ',' +
           r.vad.generic_string() + '\n';
  }
  detail::write_text(path, out);
}

}  // namespace megtl
