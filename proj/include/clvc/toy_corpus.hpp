// clvc/toy_corpus.hpp

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

// Synthetic speech for desk-scale training. A "phoneme" is a formant
// pattern, a "speaker" is an F0, a formant scale factor and a language
// (a subset of the phoneme inventory). Waveforms are harmonic sums shaped
// by the active formant envelope, with frame labels known exactly.

#ifndef CLVC_TOY_CORPUS_HPP_
#define CLVC_TOY_CORPUS_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clvc/acoustic_model.hpp"
#include "clvc/audio.hpp"

namespace clvc {

struct ToyCorpusOptions {
  int sample_rate = 16000;
  int num_phonemes = 5;
  int num_speakers = 4;
  std::vector<std::string> languages = {"en", "fi"};
  int train_utterances = 6;  // per speaker
  int eval_utterances = 2;   // per speaker
  double min_seconds = 0.6;
  double max_seconds = 1.0;
  int min_segment_frames = 8;
  int max_segment_frames = 18;
  double noise_std = 1e-3;
  double f0_jitter = 0.02;       // per-utterance relative F0 offset range
  double vibrato_depth = 0.005;  // relative F0 modulation depth
  std::uint64_t seed = 1;
};

struct ToyPhoneme {
  double formants[3];
};

struct ToySpeaker {
  std::string id;
  std::string language;
  double f0 = 120.0;
  double formant_scale = 1.0;
  std::vector<int> phonemes;  // usable inventory
};

struct ToyUtterance {
  std::string speaker_id;
  std::string language;
  AudioClip audio;
  FrameLabels labels;  // one per 32 ms / 10 ms frame
};

class ToyCorpus {
 public:
  explicit ToyCorpus(const ToyCorpusOptions &options);

  // Phoneme k spans frames [start_k, start_k + durations[k]); the clip has
  // exactly sum(durations) frames.
  ToyUtterance Synthesize(int speaker, std::span<const int> phonemes,
                          std::span<const int> durations, std::uint64_t seed) const;
  // Random phoneme string from the speaker's inventory, roughly `seconds` long.
  ToyUtterance Random(int speaker, double seconds, std::uint64_t seed) const;
  // A steady tone-like clip: one phoneme held for the whole duration.
  ToyUtterance Sustained(int speaker, int phoneme, double seconds) const;

  const ToyCorpusOptions &options() const { return options_; }
  const std::vector<ToyPhoneme> &phonemes() const { return phonemes_; }
  const std::vector<ToySpeaker> &speakers() const { return speakers_; }

 private:
  ToyCorpusOptions options_;
  std::vector<ToyPhoneme> phonemes_;
  std::vector<ToySpeaker> speakers_;
};

// Writes wav/, labels/, train.jsonl and eval.jsonl under `dir`.
void WriteToyCorpus(const std::filesystem::path &dir, const ToyCorpusOptions &options);

}  // namespace clvc

#endif  // CLVC_TOY_CORPUS_HPP_
