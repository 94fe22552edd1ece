// test_checkpoint.cpp

// Copyright 2026  The clvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <cstring>
#include <sstream>

#include "clvc/checkpoint.hpp"
#include "test_util.hpp"

using namespace clvc;

namespace {

Checkpoint Sample() {
  Checkpoint c;
  c.stage = "cm";
  c.metadata = {{"seed", 3}, {"config", {{"mode", "dpf"}}}};
  Rng rng(1);
  c.tensors.push_back(ToTensor("a.w", testing::RandomMatrix(rng, 3, 4)));
  c.tensors.push_back(ToTensor("a.b", testing::RandomMatrix(rng, 1, 4)));
  Tensor t3{"cube", {2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}};
  c.tensors.push_back(t3);
  return c;
}

std::uint32_t ReadU32(const std::string &bytes, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + at, 4);
  return v;
}

}  // namespace

TEST_CASE("binary layout header") {
  const std::string bytes = SerializeCheckpoint(Sample());
  CHECK(bytes.substr(0, 4) == "CLVC");
  CHECK(ReadU32(bytes, 4) == kCheckpointVersion);
  CHECK(ReadU32(bytes, 8) == 2);  // stage length
  CHECK(bytes.substr(12, 2) == "cm");
}

TEST_CASE("serialize / parse is idempotent") {
  const Checkpoint c = Sample();
  const std::string once = SerializeCheckpoint(c);
  const Checkpoint back = ParseCheckpoint(once);
  CHECK(back.stage == "cm");
  CHECK(back.metadata == c.metadata);
  REQUIRE(back.tensors.size() == 3);
  CHECK(back.Get("cube").shape == std::vector<std::uint64_t>{2, 2, 2});
  CHECK(back.Get("a.w").data == c.Get("a.w").data);
  CHECK(SerializeCheckpoint(back) == once);
  CHECK_FALSE(back.Contains("nope"));
  CHECK_THROWS(back.Get("nope"));
}

TEST_CASE("every truncation is rejected, as are trailing bytes") {
  const std::string bytes = SerializeCheckpoint(Sample());
  for (std::size_t n = 0; n < bytes.size(); ++n)
    CHECK_THROWS_AS(ParseCheckpoint(bytes.substr(0, n)), FormatError);
  CHECK_THROWS_AS(ParseCheckpoint(bytes + "x"), FormatError);
}

TEST_CASE("bad magic and unknown versions are rejected") {
  std::string bytes = SerializeCheckpoint(Sample());
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(ParseCheckpoint(bad), FormatError);
  std::string v2 = bytes;
  v2[4] = 2;
  CHECK_THROWS_WITH_AS(ParseCheckpoint(v2), doctest::Contains("version"), FormatError);
}

TEST_CASE("shape / payload mismatch is rejected") {
  Checkpoint c;
  c.stage = "x";
  c.tensors.push_back(Tensor{"t", {2, 3}, {1, 2, 3}});
  CHECK_THROWS(ParseCheckpoint(SerializeCheckpoint(c)));
}

TEST_CASE("file round trip, stage check and SHA-256") {
  const auto dir = testing::ScratchDir("ckpt");
  SaveCheckpoint(dir / "a.ckpt", Sample());
  CHECK(LoadCheckpoint(dir / "a.ckpt").tensors.size() == 3);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "a.ckpt", "am"), PreconditionError);
  CHECK(FileSha256(dir / "a.ckpt") == Sha256Hex(SerializeCheckpoint(Sample())));
  CHECK(Sha256Hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK_THROWS(LoadCheckpoint(dir / "missing.ckpt"));
}

TEST_CASE("text dump agrees with the binary payload") {
  const Checkpoint c = Sample();
  for (const Tensor &t : c.tensors) {
    const std::string text = TensorToText(t);
    std::istringstream in(text);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("# " + t.name + "\t", 0) == 0);
    // Independent parse of the body.
    std::vector<float> values;
    double v;
    while (in >> v) values.push_back(static_cast<float>(v));
    CHECK(values == t.data);
    const Tensor back = TensorFromText(text);
    CHECK(back.name == t.name);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
  }
}

TEST_CASE("parameter stores survive a round trip exactly") {
  nn::ParameterStore store;
  Rng rng(2);
  store.Add("x", testing::RandomMatrix(rng, 3, 2));
  store.Add("frozen", testing::RandomMatrix(rng, 1, 2), false);
  nn::ParameterStore back = TensorsToStore(ParseCheckpoint(SerializeCheckpoint(
      Checkpoint{"s", nlohmann::json::object(), StoreToTensors(store)})).tensors);
  CHECK(back.Get("x").value == store.Get("x").value);
  CHECK(back.Get("frozen").value == store.Get("frozen").value);
}

TEST_CASE("path lock is exclusive") {
  const auto dir = testing::ScratchDir("lock");
  {
    PathLock a(dir / "out.ckpt");
    CHECK(std::filesystem::exists(dir / "out.ckpt.lock"));
    CHECK_THROWS_AS(PathLock(dir / "out.ckpt"), PreconditionError);
  }
  CHECK_FALSE(std::filesystem::exists(dir / "out.ckpt.lock"));
  PathLock again(dir / "out.ckpt");
}
