// clvc/vocoder.hpp

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

// Mel-to-waveform synthesis.
//
// GriffinLim: pseudo-inverse of the mel filterbank, then iterative phase
// reconstruction with a least-squares inverse STFT.
//
// FlowVocoder: a small conditional normalizing flow. The waveform is
// squeezed into rows of `squeeze_group` samples; each flow applies an
// LU-parameterized invertible channel mix (W = P L (U + diag(sign * exp(log_s))))
// followed by an affine coupling whose scale/shift net sees the untouched
// half and the nearest mel frame:
//
//   [x_a | x_b] -> [x_a | x_b * exp(s(x_a, mel)) + t(x_a, mel)]

#ifndef CLVC_VOCODER_HPP_
#define CLVC_VOCODER_HPP_

#include <span>
#include <vector>

#include "clvc/audio.hpp"
#include "clvc/features.hpp"
#include "clvc/nn.hpp"

namespace clvc {

struct GriffinLimOptions {
  int iterations = 60;
};

struct GriffinLimResult {
  AudioClip audio;
  // ||S e^{j phi} - STFT(x)|| / ||S|| after each iteration (full-spectrum norm).
  std::vector<double> convergence;
};

// Output length is T * hop + (win - hop) samples.
GriffinLimResult GriffinLimTrace(const MelSpectrogram &mel, const GriffinLimOptions &options = {});
AudioClip GriffinLim(const MelSpectrogram &mel, const GriffinLimOptions &options = {});

// T * hop + (win - hop) for the given mel framing.
std::size_t SynthesisLength(Eigen::Index frames, int sample_rate, double win_ms = 32.0,
                            double hop_ms = 10.0);

struct FlowConfig {
  int n_flows = 4;
  int squeeze_group = 8;
  int hidden = 64;
  int kernel = 3;
  int mel_dim = kNumMels;
  int hop_samples = 160;
  int win_samples = 512;
  bool orthogonal_mix_init = true;
  double train_sigma = 1.0;
  double synth_sigma = 0.6;
  double max_condition = 1e6;

  void Validate() const;
  // Config whose mel framing matches 32 ms / 10 ms at the given rate.
  static FlowConfig ForSampleRate(int sample_rate);
};

// A training example: rows of squeezed audio and their conditioning rows.
struct FlowSegment {
  Matrix audio;      // R x squeeze_group
  Matrix condition;  // R x mel_dim, normalized log-mel
};

class FlowVocoder {
 public:
  FlowVocoder(const FlowConfig &config, std::uint64_t seed);
  FlowVocoder(const FlowConfig &config, nn::ParameterStore params);

  // Length must be a multiple of squeeze_group.
  Matrix Squeeze(std::span<const double> samples) const;
  static std::vector<double> Unsqueeze(const Matrix &rows);

  // Conditioning rows for squeezed rows [first_row, first_row + rows): the
  // normalized mel frame whose window center is nearest to each row's
  // midpoint. Throws if the mel does not cover the samples.
  Matrix ConditionRows(const Matrix &log_mel, Eigen::Index first_row, Eigen::Index rows) const;

  // Cuts [offset, offset + length) from a clip and pairs it with its mel.
  FlowSegment MakeSegment(const AudioClip &clip, const Matrix &log_mel, std::size_t offset,
                          std::size_t length) const;

  struct Latent {
    ad::Var z;        // R x squeeze_group
    ad::Var log_det;  // 1 x 1
  };
  Latent Forward(ad::Tape &tape, const FlowSegment &segment) const;

  template <typename Scalar>
  struct LatentT {
    MatrixT<Scalar> z;
    Scalar log_det = 0;
  };
  template <typename Scalar>
  LatentT<Scalar> ForwardT(const MatrixT<Scalar> &audio, const MatrixT<Scalar> &condition) const;
  // Exact inverse; throws NumericError if a channel mix fails the
  // condition-number guard.
  template <typename Scalar>
  MatrixT<Scalar> InverseT(const MatrixT<Scalar> &z, const MatrixT<Scalar> &condition) const;

  // Effective channel-mix matrix of flow k.
  Matrix MixMatrix(int flow) const;
  double MixConditionNumber(int flow) const;

  // Samples z ~ N(0, sigma^2) (sigma = 0 gives z = 0) and inverts. Output
  // length follows SynthesisLength.
  AudioClip Synthesize(const MelSpectrogram &mel, double sigma, std::uint64_t seed) const;

  const FlowConfig &config() const { return config_; }
  nn::ParameterStore &params() { return params_; }
  const nn::ParameterStore &params() const { return params_; }

  static std::string FlowName(int flow);

 private:
  template <typename Scalar>
  MatrixT<Scalar> CouplingNet(int flow, const MatrixT<Scalar> &a,
                              const MatrixT<Scalar> &condition) const;

  FlowConfig config_;
  nn::ParameterStore params_;
};

// Negative log-likelihood per element under N(0, sigma^2):
// [0.5 sum z^2 / sigma^2 + n * 0.5 ln(2 pi sigma^2) - log_det] / n.
ad::Var FlowNll(ad::Tape &tape, const FlowVocoder &vocoder, const FlowSegment &segment,
                double sigma);

// Mean NLL over the batch, then one update.
double VocTrainStep(FlowVocoder *vocoder, nn::Adam *optimizer,
                    std::span<const FlowSegment> batch);
double VocLoss(const FlowVocoder &vocoder, std::span<const FlowSegment> batch);

}  // namespace clvc

#endif  // CLVC_VOCODER_HPP_
