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

#include <stdexcept>
#include <string>

namespace megtl {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a precondition (bad configuration, out-of-range argument).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure: missing input, unwritable output.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or CSV input.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, NonFinite, Malformed };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Data that is well-formed but unusable for the requested operation
/// (shape mismatch, empty split, single-class truth).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace megtl
