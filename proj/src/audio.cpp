// audio.cpp

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

#include "clvc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace clvc {

namespace {

std::uint32_t ReadU32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t ReadU16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::vector<unsigned char> *out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void PutU16(std::vector<unsigned char> *out, std::uint16_t v) {
  out->push_back(static_cast<unsigned char>(v & 0xff));
  out->push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioClip LoadWav(const std::filesystem::path &path, const WavReadOptions &options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " in '" + path.string() + "'";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file" + where);

  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char *data = nullptr;
  std::size_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char *hdr = bytes.data() + pos;
    std::uint32_t size = ReadU32(hdr + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a data chunk whose declared size overruns a truncated file.
      if (std::memcmp(hdr, "data", 4) == 0) size = static_cast<std::uint32_t>(bytes.size() - body);
      else throw FormatError("truncated chunk" + where);
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("short fmt chunk" + where);
      const unsigned char *f = bytes.data() + body;
      format = ReadU16(f);
      channels = ReadU16(f + 2);
      rate = ReadU32(f + 4);
      bits = ReadU16(f + 14);
      if (format == kFormatExtensible && size >= 26) format = ReadU16(f + 24);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError("missing fmt chunk" + where);
  if (data == nullptr) throw FormatError("missing data chunk" + where);
  if (format != kFormatPcm || bits != 16)
    throw FormatError("unsupported encoding (only 16-bit PCM is accepted)" + where);
  if (channels == 0 || rate == 0) throw FormatError("bad channel count or sample rate" + where);
  if (channels > 1 && !options.select_first_channel)
    throw FormatError("multi-channel audio" + where + " (enable first-channel selection)");

  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw FormatError("zero-length audio" + where);
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    auto v = static_cast<std::int16_t>(ReadU16(data + i * frame_bytes));
    clip.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return clip;
}

void SaveWav(const std::filesystem::path &path, const AudioClip &clip) {
  if (clip.sample_rate <= 0) throw PreconditionError("SaveWav: invalid sample rate");
  std::vector<unsigned char> out;
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  PutU32(&out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  PutU32(&out, 16);
  PutU16(&out, kFormatPcm);
  PutU16(&out, 1);
  PutU32(&out, static_cast<std::uint32_t>(clip.sample_rate));
  PutU32(&out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  PutU16(&out, 2);
  PutU16(&out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  PutU32(&out, data_bytes);
  for (float s : clip.samples) {
    double v = std::nearbyint(static_cast<double>(s) * 32768.0);
    if (!std::isfinite(v)) v = 0.0;
    v = std::clamp(v, -32768.0, 32767.0);
    PutU16(&out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

void ValidateClip(const AudioClip &clip) {
  if (clip.sample_rate <= 0) throw PreconditionError("audio clip has non-positive sample rate");
  if (clip.samples.empty()) throw PreconditionError("audio clip is empty");
  for (float s : clip.samples)
    if (!std::isfinite(s)) throw NumericError("audio clip contains non-finite samples");
}

AudioClip TrimSilence(const AudioClip &clip, const TrimOptions &options) {
  ValidateClip(clip);
  if (!(options.threshold_db < 0.0)) throw PreconditionError("trim threshold must be negative dB");
  const auto frame = static_cast<std::size_t>(
      std::max(1L, std::lround(clip.sample_rate * options.frame_ms / 1000.0)));
  const std::size_t n = clip.samples.size();
  const std::size_t frames = (n + frame - 1) / frame;
  std::vector<double> rms(frames);
  double peak = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t b = f * frame, e = std::min(n, b + frame);
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += static_cast<double>(clip.samples[i]) * clip.samples[i];
    rms[f] = std::sqrt(acc / static_cast<double>(e - b));
    peak = std::max(peak, rms[f]);
  }
  if (!(peak > 0.0)) throw PreconditionError("all-silent input");
  const double threshold = peak * std::pow(10.0, options.threshold_db / 20.0);
  std::size_t first = 0, last = frames - 1;
  while (first < frames && rms[first] < threshold) ++first;
  while (last > first && rms[last] < threshold) --last;

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  const std::size_t b = first * frame, e = std::min(n, (last + 1) * frame);
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(b),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(e));
  return out;
}

}  // namespace clvc
