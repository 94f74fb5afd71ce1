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

#include "textmark/common.h"

#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace textmark {
namespace {

// RFC 4231 test case 1.
TEST(HmacSha256Test, Rfc4231Case1) {
  std::vector<uint8_t> key(20, 0x0b);
  EXPECT_EQ(HexEncode(HmacSha256(key, AsBytes("Hi There"))),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
}

// RFC 4231 test case 2.
TEST(HmacSha256Test, Rfc4231Case2) {
  EXPECT_EQ(HexEncode(HmacSha256(AsBytes("Jefe"),
                                 AsBytes("what do ya want for nothing?"))),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

// RFC 4231 test case 6: key longer than the block size.
TEST(HmacSha256Test, Rfc4231Case6) {
  std::vector<uint8_t> key(131, 0xaa);
  EXPECT_EQ(
      HexEncode(HmacSha256(
          key, AsBytes("Test Using Larger Than Block-Size Key - Hash Key First"))),
      "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54");
}

TEST(Sha256Test, KnownVectors) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Sha256Hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(HexTest, RoundTrip) {
  std::vector<uint8_t> bytes = {0x00, 0x7f, 0x80, 0xff, 0x2f, 0x07};
  EXPECT_EQ(HexEncode(bytes), "007f80ff2f07");
  EXPECT_EQ(HexDecode("007F80ff2f07"), bytes);
  EXPECT_EQ(HexDecode("00 7f\n80ff 2f07"), bytes);
}

TEST(HexTest, RejectsMalformedInput) {
  EXPECT_THROW(HexDecode("abc"), ParseError);
  EXPECT_THROW(HexDecode("zz"), ParseError);
}

TEST(FileTest, AtomicWriteThenRead) {
  auto dir = std::filesystem::temp_directory_path() / "textmark_common_test";
  std::filesystem::remove_all(dir);
  std::string path = (dir / "sub" / "file.bin").string();
  std::string contents("a\0b\nc", 5);
  WriteFileAtomic(path, contents);
  EXPECT_EQ(ReadFile(path), contents);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  EXPECT_EQ(Sha256File(path), Sha256Hex(contents));
  EXPECT_THROW(ReadFile((dir / "missing").string()), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace textmark
