// clvc/acoustic_model.hpp

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

// Speaker-independent phoneme recognizer over context-stacked MFCCs: a stack
// of bidirectional LSTMs followed by a softmax layer. The last recurrent
// layer's concatenated hidden states are the deep phonetic feature (DPF);
// the softmax output is the monolingual posteriorgram (mPPG).

#ifndef CLVC_ACOUSTIC_MODEL_HPP_
#define CLVC_ACOUSTIC_MODEL_HPP_

#include <span>
#include <string>
#include <vector>

#include "clvc/audio.hpp"
#include "clvc/features.hpp"
#include "clvc/nn.hpp"

namespace clvc {

enum class ContentMode { kMppg, kDpf };

const char *ContentModeName(ContentMode mode);
ContentMode ParseContentMode(const std::string &name);

struct AcousticModelConfig {
  int input_dim = kContextMfccDim;
  int num_layers = 3;
  int hidden = 512;
  // When false, `hidden` is the total over both directions.
  bool hidden_per_direction = true;
  int num_phonemes = 70;

  int PerDirection() const { return hidden_per_direction ? hidden : hidden / 2; }
  int DpfDim() const { return 2 * PerDirection(); }
  int ContentDim(ContentMode mode) const {
    return (mode == ContentMode::kMppg ? num_phonemes : DpfDim()) + kProsodyDim;
  }
  void Validate() const;
};

// Per-frame phoneme ids, one per feature frame.
using FrameLabels = std::vector<int>;

struct LabeledUtterance {
  Matrix features;  // T x input_dim
  FrameLabels labels;
};

class AcousticModel {
 public:
  AcousticModel(const AcousticModelConfig &config, std::uint64_t seed);
  // Adopts an existing parameter set (e.g. from a checkpoint); validates shapes.
  AcousticModel(const AcousticModelConfig &config, nn::ParameterStore params);

  struct Outputs {
    ad::Var dpf;     // T x DpfDim
    ad::Var logits;  // T x num_phonemes
  };
  Outputs Forward(ad::Tape &tape, const Matrix &features) const;

  struct Posteriors {
    Matrix mppg;  // T x num_phonemes, rows on the simplex
    Matrix dpf;   // T x DpfDim
  };
  Posteriors Infer(const Matrix &features) const;

  // Argmax phoneme per frame.
  FrameLabels Decode(const Matrix &features) const;

  const AcousticModelConfig &config() const { return config_; }
  nn::ParameterStore &params() { return params_; }
  const nn::ParameterStore &params() const { return params_; }

  static std::string LayerName(int layer, bool backward);

 private:
  AcousticModelConfig config_;
  nn::ParameterStore params_;
};

// Mean per-frame cross-entropy over the whole batch.
ad::Var AmBatchLoss(ad::Tape &tape, const AcousticModel &model,
                    std::span<const LabeledUtterance> batch);

// AmBatchLoss, then one optimizer
// update. Throws NumericError on a non-finite loss.
double AmTrainStep(AcousticModel *model, nn::Adam *optimizer,
                   std::span<const LabeledUtterance> batch);

// The batch loss without touching parameters or gradients.
double AmLoss(const AcousticModel &model, std::span<const LabeledUtterance> batch);

double FrameAccuracy(const AcousticModel &model, std::span<const LabeledUtterance> data);

std::vector<int> CollapseRepeats(std::span<const int> labels);
std::size_t EditDistance(std::span<const int> a, std::span<const int> b);
// Levenshtein distance of the repeat-collapsed sequences divided by the
// collapsed reference length.
double PhonemeErrorRate(std::span<const int> pred, std::span<const int> ref);

// Front-end + acoustic model + prosody: T x (D + 2), D = 70 (mPPG) or DPF dim.
Matrix ExtractPhoneticFeatures(const AudioClip &clip, ContentMode mode,
                               const AcousticModel &model);
Matrix ExtractPhoneticFeatures(const FrontEndFeatures &front, ContentMode mode,
                               const AcousticModel &model);

}  // namespace clvc

#endif  // CLVC_ACOUSTIC_MODEL_HPP_
