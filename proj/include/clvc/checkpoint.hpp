// clvc/checkpoint.hpp

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

// Named-tensor container. All integers little-endian:
//
//   "CLVC"                      4 bytes
//   version                     u32 (= 1)
//   stage tag                   u32 length + bytes
//   metadata (JSON)             u64 length + bytes
//   tensor count                u32
//   per tensor:
//     name                      u32 length + bytes
//     ndim                      u32
//     dims                      ndim x u64
//     payload byte length       u64 (= product(dims) * 4)
//     payload                   float32, row-major

#ifndef CLVC_CHECKPOINT_HPP_
#define CLVC_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "clvc/nn.hpp"

namespace clvc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t NumElements() const;
};

struct Checkpoint {
  std::string stage;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Tensor> tensors;

  const Tensor &Get(const std::string &name) const;
  bool Contains(const std::string &name) const;
};

std::string SerializeCheckpoint(const Checkpoint &ckpt);
// Throws FormatError on a bad magic, unknown version, truncation, a
// shape/byte-length mismatch or trailing bytes.
Checkpoint ParseCheckpoint(const std::string &bytes);

void SaveCheckpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint LoadCheckpoint(const std::filesystem::path &path);
// Like LoadCheckpoint, but also checks the stage tag.
Checkpoint LoadCheckpoint(const std::filesystem::path &path, const std::string &stage);

Tensor ToTensor(const std::string &name, const Matrix &m);
Matrix ToMatrix(const Tensor &t);

// One tensor per parameter, in name order.
std::vector<Tensor> StoreToTensors(const nn::ParameterStore &store);
nn::ParameterStore TensorsToStore(const std::vector<Tensor> &tensors);

// Delimited text view of a tensor: a "# name <tab> d0 x d1 ..." header then
// one row per line, tab separated, printed with 9 significant digits.
std::string TensorToText(const Tensor &t);
Tensor TensorFromText(const std::string &text);

std::string ReadFileBytes(const std::filesystem::path &path);
void WriteFileBytes(const std::filesystem::path &path, const std::string &bytes);

// Hex SHA-256 of a byte string / file.
std::string Sha256Hex(const std::string &bytes);
std::string FileSha256(const std::filesystem::path &path);

// Exclusive writer lock: creates <path>.lock with O_EXCL and removes it on
// destruction. Throws PreconditionError if the lock is already held.
class PathLock {
 public:
  explicit PathLock(const std::filesystem::path &path);
  ~PathLock();
  PathLock(const PathLock &) = delete;
  PathLock &operator=(const PathLock &) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace clvc

#endif  // CLVC_CHECKPOINT_HPP_
