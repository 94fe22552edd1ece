// clvc/audio.hpp

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

#ifndef CLVC_AUDIO_HPP_
#define CLVC_AUDIO_HPP_

#include <filesystem>
#include <vector>

#include "clvc/common.hpp"

namespace clvc {

// Mono PCM audio, samples nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct WavReadOptions {
  // Multi-channel files are rejected unless this is set, in which case the
  // first (left) channel is kept.
  bool select_first_channel = false;
};

// Reads a 16-bit PCM RIFF/WAVE file; samples are scaled by 1/32768.
AudioClip LoadWav(const std::filesystem::path &path, const WavReadOptions &options = {});

// Writes 16-bit PCM mono. Samples are scaled by 32768, rounded and clamped
// to the int16 range, so LoadWav -> SaveWav reproduces int16 data exactly.
void SaveWav(const std::filesystem::path &path, const AudioClip &clip);

// Throws if the clip is empty, has a bad rate or holds non-finite samples.
void ValidateClip(const AudioClip &clip);

struct TrimOptions {
  double threshold_db = -40.0;  // relative to the loudest scan frame
  double frame_ms = 25.0;
};

// Removes leading and trailing scan frames whose RMS is below
// peak_rms * 10^(threshold_db / 20). Interior samples are untouched.
// Throws PreconditionError("all-silent input") if nothing qualifies.
AudioClip TrimSilence(const AudioClip &clip, const TrimOptions &options = {});

}  // namespace clvc

#endif  // CLVC_AUDIO_HPP_
