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


#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace megtl::detail {

/// Whole-file text IO. Output is written byte-for-byte (LF stays LF).
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Splits one unquoted CSV record. Fields may not contain commas.
std::vector<std::string> split_fields(std::string_view line);

/// Fixed-point decimal with `digits` fractional digits, locale independent.
std::string format_fixed(double v, int digits = 6);

/// Strict full-string parse; throws FormatError(Malformed) naming `origin`.
double parse_double(std::string_view s, const std::string& origin);

/// Non-empty lines of `text` with a trailing CR stripped.
std::vector<std::string> text_lines(std::string_view text);

}  // namespace megtl::detail
