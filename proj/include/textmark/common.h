// Copyright 2026 The Textmark Authors.
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

#ifndef TEXTMARK_COMMON_H_
#define TEXTMARK_COMMON_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace textmark {

// Base class for all errors raised by the library. Callers that only care
// about "something went wrong" can catch this; the subclasses exist so tests
// and the CLI can tell input problems from shape problems.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or record.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Tensor or matrix dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// An artifact on disk does not match the hash recorded for it.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Lowercase hex encoding of a byte string.
std::string HexEncode(std::span<const uint8_t> bytes);
std::vector<uint8_t> HexDecode(std::string_view hex);

// SHA-256 digest helpers.
std::vector<uint8_t> Sha256(std::span<const uint8_t> bytes);
std::string Sha256Hex(std::string_view data);
std::string Sha256File(const std::string& path);

// HMAC-SHA256 of `message` under `key` (full 32-byte output).
std::vector<uint8_t> HmacSha256(std::span<const uint8_t> key,
                                std::span<const uint8_t> message);

inline std::span<const uint8_t> AsBytes(std::string_view s) {
  return {reinterpret_cast<const uint8_t*>(s.data()), s.size()};
}

// Whole-file helpers. WriteFileAtomic writes to a sibling temp file and
// renames it into place.
std::string ReadFile(const std::string& path);
void WriteFileAtomic(const std::string& path, std::string_view contents);

}  // namespace textmark

#endif  // TEXTMARK_COMMON_H_
