// Copyright (c) 2026, The PSIS Toolkit Authors. All rights reserved.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psis {

/// Coarse error classes. Each maps onto one CLI exit code.
enum class ErrorClass {
  kConfig = 1,     // invalid parameters or configuration
  kData = 2,       // malformed or inconsistent input data
  kIo = 3,         // filesystem / codec failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

 private:
  ErrorClass cls_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorClass::kIo, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::kData, what) {}
};

/// Malformed annotation text. `offset` is the byte position reported by the parser.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateGeometryError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyMaskError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownClassError : public DataError {
 public:
  using DataError::DataError;
};

/// A switch whose incoming instance (or one of its attachments) vanishes after
/// rescaling and clipping.
class DegenerateSwitchError : public DataError {
 public:
  using DataError::DataError;
};

class ClippedAwayError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateDistributionError : public DataError {
 public:
  using DataError::DataError;
};

class NothingToSampleError : public DataError {
 public:
  using DataError::DataError;
};

/// A class required by a computation has no data (no AP entry, zero instances).
class MissingClassError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace psis
