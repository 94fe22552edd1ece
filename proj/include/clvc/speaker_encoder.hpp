// clvc/speaker_encoder.hpp

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

// d-vector speaker encoder: LSTM stack over log-mel frames, last-frame state
// projected and L2-normalized. Trained with the softmax variant of the
// generalized end-to-end (GE2E) verification loss.

#ifndef CLVC_SPEAKER_ENCODER_HPP_
#define CLVC_SPEAKER_ENCODER_HPP_

#include <span>
#include <string>
#include <vector>

#include "clvc/audio.hpp"
#include "clvc/features.hpp"
#include "clvc/nn.hpp"

namespace clvc {

struct SpeakerEncoderConfig {
  int mel_dim = kNumMels;
  int hidden = 256;
  int num_layers = 3;
  int embedding_dim = 256;
  int min_frames = 160;
  double w_init = 10.0;
  double b_init = -5.0;

  void Validate() const;
};

class SpeakerEncoder {
 public:
  SpeakerEncoder(const SpeakerEncoderConfig &config, std::uint64_t seed);
  SpeakerEncoder(const SpeakerEncoderConfig &config, nn::ParameterStore params);

  // All windows must have the same frame count (>= min_frames). Returns
  // B x embedding_dim unit-norm rows, one per window.
  ad::Var Forward(ad::Tape &tape, std::span<const Matrix> windows) const;

  // Single-window embedding.
  RowVector Embed(const Matrix &mel) const;

  const SpeakerEncoderConfig &config() const { return config_; }
  nn::ParameterStore &params() { return params_; }
  const nn::ParameterStore &params() const { return params_; }

 private:
  SpeakerEncoderConfig config_;
  nn::ParameterStore params_;
};

// Softmax GE2E loss. `embeddings` holds N*M unit-norm rows ordered
// speaker-major (row j*M + i is utterance i of speaker j). `w` and `b` are
// 1x1. Own-speaker similarities use the centroid that excludes the utterance.
ad::Var Ge2eLoss(ad::Var embeddings, int num_speakers, int utterances_per_speaker, ad::Var w,
                 ad::Var b);
double Ge2eLossValue(const Matrix &embeddings, int num_speakers, int utterances_per_speaker,
                     double w, double b);

// One GE2E update over N x M windows (speaker-major). w is kept positive.
double SeTrainStep(SpeakerEncoder *encoder, nn::Adam *optimizer,
                   std::span<const Matrix> windows, int num_speakers,
                   int utterances_per_speaker);

struct EnrollOptions {
  int num_segments = 5;
  double segment_seconds = 10.0;
};

struct EnrollmentSet {
  std::string speaker_id;
  struct Segment {
    std::size_t clip = 0;
    std::size_t offset = 0;  // samples
  };
  std::vector<Segment> segments;
  Matrix segment_embeddings;  // K x E
  RowVector aggregate;        // renormalized mean
};

// Draws K = min(num_segments, total whole segments available) fixed-length
// segments at seeded-random offsets and aggregates their embeddings. Clips
// shorter than one segment contribute nothing.
EnrollmentSet EnrollSpeaker(const std::string &speaker_id, std::span<const AudioClip> clips,
                            const SpeakerEncoder &encoder, const EnrollOptions &options,
                            std::uint64_t seed);

double CosineSimilarity(const RowVector &a, const RowVector &b);

// Scores are accepted when >= threshold. Sweeps every distinct score as a
// threshold (plus one above the maximum) and linearly interpolates between
// the two operating points where FAR - FRR changes sign.
double EqualErrorRate(std::span<const double> scores, std::span<const bool> same_speaker);

}  // namespace clvc

#endif  // CLVC_SPEAKER_ENCODER_HPP_
