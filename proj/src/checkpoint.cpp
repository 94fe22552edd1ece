// checkpoint.cpp

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

#include "clvc/checkpoint.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace clvc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::uint64_t Tensor::NumElements() const {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) n *= d;
  return n;
}

const Tensor &Checkpoint::Get(const std::string &name) const {
  for (const auto &t : tensors)
    if (t.name == name) return t;
  throw FormatError("checkpoint (stage '" + stage + "') has no tensor '" + name + "'");
}

bool Checkpoint::Contains(const std::string &name) const {
  for (const auto &t : tensors)
    if (t.name == name) return true;
  return false;
}

namespace {

template <typename T>
void Put(std::string *out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out->append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string &bytes) : bytes_(bytes) {}

  template <typename T>
  T Get(const char *what) {
    Need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string GetBytes(std::uint64_t n, const char *what) {
    Need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void Need(std::uint64_t n, const char *what) const {
    if (n > bytes_.size() - pos_)
      throw FormatError(std::string("checkpoint is truncated or corrupt (reading ") + what +
                        " at byte " + std::to_string(pos_) + ")");
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string &bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SerializeCheckpoint(const Checkpoint &ckpt) {
  std::string out = "CLVC";
  Put<std::uint32_t>(&out, kCheckpointVersion);
  Put<std::uint32_t>(&out, static_cast<std::uint32_t>(ckpt.stage.size()));
  out += ckpt.stage;
  const std::string meta = ckpt.metadata.dump();
  Put<std::uint64_t>(&out, meta.size());
  out += meta;
  Put<std::uint32_t>(&out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto &t : ckpt.tensors) {
    if (t.data.size() != t.NumElements())
      throw ShapeError("tensor '" + t.name + "' holds " + std::to_string(t.data.size()) +
                       " values but its shape needs " + std::to_string(t.NumElements()));
    Put<std::uint32_t>(&out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    Put<std::uint32_t>(&out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint64_t d : t.shape) Put<std::uint64_t>(&out, d);
    Put<std::uint64_t>(&out, t.data.size() * sizeof(float));
    out.append(reinterpret_cast<const char *>(t.data.data()), t.data.size() * sizeof(float));
  }
  return out;
}

Checkpoint ParseCheckpoint(const std::string &bytes) {
  Reader in(bytes);
  if (in.GetBytes(4, "magic") != "CLVC") throw FormatError("not a checkpoint (bad magic)");
  const auto version = in.Get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint format_version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  ckpt.stage = in.GetBytes(in.Get<std::uint32_t>("stage length"), "stage tag");
  const std::string meta = in.GetBytes(in.Get<std::uint64_t>("metadata length"), "metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = in.Get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = in.GetBytes(in.Get<std::uint32_t>("tensor name length"), "tensor name");
    const auto ndim = in.Get<std::uint32_t>("tensor rank");
    in.Need(static_cast<std::uint64_t>(ndim) * 8, "tensor dims");
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(in.Get<std::uint64_t>("dim"));
    const auto byte_length = in.Get<std::uint64_t>("payload length");
    const std::uint64_t n = t.NumElements();
    if (byte_length != n * sizeof(float))
      throw FormatError("tensor '" + t.name + "': payload of " + std::to_string(byte_length) +
                        " bytes does not match its shape (" + std::to_string(n) + " floats)");
    in.Need(byte_length, "tensor payload");
    t.data.resize(n);
    const std::string payload = in.GetBytes(byte_length, "tensor payload");
    std::memcpy(t.data.data(), payload.data(), byte_length);
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0)
    throw FormatError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
  return ckpt;
}

std::string ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path &path, const std::string &bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PreconditionError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw PreconditionError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

void SaveCheckpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  WriteFileBytes(path, SerializeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    throw PreconditionError("checkpoint '" + path.string() + "' does not exist");
  try {
    return ParseCheckpoint(ReadFileBytes(path));
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Checkpoint LoadCheckpoint(const std::filesystem::path &path, const std::string &stage) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (ckpt.stage != stage)
    throw PreconditionError("'" + path.string() + "' is a '" + ckpt.stage +
                            "' checkpoint, expected '" + stage + "'");
  return ckpt;
}

Tensor ToTensor(const std::string &name, const Matrix &m) {
  Tensor t;
  t.name = name;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data[i] = static_cast<float>(m.data()[i]);
  return t;
}

Matrix ToMatrix(const Tensor &t) {
  Eigen::Index rows = 1, cols = 1;
  if (t.shape.size() == 1) {
    cols = static_cast<Eigen::Index>(t.shape[0]);
  } else if (t.shape.size() == 2) {
    rows = static_cast<Eigen::Index>(t.shape[0]);
    cols = static_cast<Eigen::Index>(t.shape[1]);
  } else if (!t.shape.empty()) {
    throw ShapeError("tensor '" + t.name + "' has rank " + std::to_string(t.shape.size()) +
                     "; only rank <= 2 maps to a matrix");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = t.data[i];
  return m;
}

std::vector<Tensor> StoreToTensors(const nn::ParameterStore &store) {
  std::vector<Tensor> out;
  for (const auto &[name, p] : store.items()) out.push_back(ToTensor(name, p.value));
  return out;
}

nn::ParameterStore TensorsToStore(const std::vector<Tensor> &tensors) {
  nn::ParameterStore store;
  for (const auto &t : tensors) store.Add(t.name, ToMatrix(t));
  return store;
}

std::string TensorToText(const Tensor &t) {
  std::ostringstream out;
  out << "# " << t.name << '\t';
  for (std::size_t d = 0; d < t.shape.size(); ++d) out << (d ? " x " : "") << t.shape[d];
  out << '\n' << std::setprecision(9);
  const std::uint64_t cols = t.shape.empty() ? 1 : t.shape.back();
  for (std::uint64_t i = 0; i < t.data.size(); ++i)
    out << t.data[i] << ((i + 1) % cols == 0 ? '\n' : '\t');
  return out.str();
}

Tensor TensorFromText(const std::string &text) {
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  if (header.rfind("# ", 0) != 0) throw FormatError("tensor text dump lacks its header");
  const std::size_t tab = header.find('\t');
  if (tab == std::string::npos) throw FormatError("tensor text header lacks a shape");
  Tensor t;
  t.name = header.substr(2, tab - 2);
  std::istringstream dims(header.substr(tab + 1));
  std::string tok;
  while (dims >> tok)
    if (tok != "x") t.shape.push_back(std::stoull(tok));
  double v;
  while (in >> v) t.data.push_back(static_cast<float>(v));
  if (t.data.size() != t.NumElements())
    throw FormatError("tensor text dump for '" + t.name + "' has the wrong value count");
  return t;
}

std::string Sha256Hex(const std::string &bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string FileSha256(const std::filesystem::path &path) {
  return Sha256Hex(ReadFileBytes(path));
}

PathLock::PathLock(const std::filesystem::path &path) : lock_path_(path.string() + ".lock") {
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw PreconditionError("'" + path.string() + "' is locked by another writer (" +
                              lock_path_.string() + " exists)");
    throw PreconditionError("cannot create lock '" + lock_path_.string() +
                            "': " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

PathLock::~PathLock() {
  std::error_code ec;
  std::filesystem::remove(lock_path_, ec);
}

}  // namespace clvc
