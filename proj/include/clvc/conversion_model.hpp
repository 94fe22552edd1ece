// clvc/conversion_model.hpp

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

// Length-matched sequence-to-sequence mel predictor.
//
//   content (T x C) -> normalize -> conv stack -> BLSTM -> [enc | speaker]
//   for t in 0 .. T-1:
//     prenet(prev frame) + prev context -> attention LSTM -> query
//     location-sensitive attention over rows [c - left, c + right] only
//     [query | context] -> decoder LSTM -> [h | context] -> linear -> frame
//   frames -> postnet (residual)
//
// There is no stop-token head: decoding always runs exactly T steps.

#ifndef CLVC_CONVERSION_MODEL_HPP_
#define CLVC_CONVERSION_MODEL_HPP_

#include <span>
#include <string>
#include <vector>

#include "clvc/features.hpp"
#include "clvc/nn.hpp"

namespace clvc {

enum class WindowCenter {
  kStep,          // window centered at the decoder step index
  kPreviousPeak,  // centered at the argmax of the previous alignment
};

struct ConversionConfig {
  int content_dim = 72;
  int speaker_dim = 256;
  int encoder_conv_layers = 3;
  int encoder_conv_channels = 512;
  int encoder_kernel = 5;
  int encoder_dim = 512;  // BLSTM output, split evenly over both directions
  int attention_dim = 128;
  int location_channels = 32;
  int location_kernel = 31;
  std::vector<int> prenet_dims = {256, 256};
  double prenet_dropout = 0.5;
  bool prenet_dropout_at_inference = true;
  int attention_rnn_dim = 1024;
  int decoder_rnn_dim = 1024;
  int postnet_layers = 5;
  int postnet_channels = 512;
  int postnet_kernel = 5;
  int mel_dim = kNumMels;
  int window_left = 30;
  int window_right = 30;
  WindowCenter window_center = WindowCenter::kStep;

  int MemoryDim() const { return encoder_dim + speaker_dim; }
  void Validate() const;
};

// Attention weights for one decoder step. Only the support
// [begin, begin + weights.size()) is stored; everything else is exactly 0.
struct AttentionAlignment {
  Eigen::Index step = 0;
  Eigen::Index center = 0;
  Eigen::Index begin = 0;
  RowVector weights;

  Eigen::Index end() const { return begin + weights.size(); }
  // Full-length view (length `frames`).
  RowVector Dense(Eigen::Index frames) const;
};

// True if the alignment is non-negative, sums to 1 within `tol` and has no
// mass outside [center - left, center + right].
bool AlignmentWithinWindow(const AttentionAlignment &a, int left, int right, double tol = 1e-6);

struct ConversionItem {
  Matrix content;       // T x content_dim
  RowVector speaker;    // speaker_dim, unit norm
  Matrix target;        // T x 80 log-mel (training only)
};

class ConversionModel {
 public:
  ConversionModel(const ConversionConfig &config, std::uint64_t seed);
  ConversionModel(const ConversionConfig &config, nn::ParameterStore params);

  // Encoder outputs with the speaker vector appended to every row:
  // T x (encoder_dim + speaker_dim).
  ad::Var Encode(ad::Tape &tape, const Matrix &content, const RowVector &speaker) const;

  struct Memory {
    ad::Var values;     // T x MemoryDim
    ad::Var processed;  // T x attention_dim
    Eigen::Index frames = 0;
  };
  Memory PrepareMemory(ad::Tape &tape, ad::Var encoded) const;

  struct DecoderState {
    ad::Var att_h, att_c, dec_h, dec_c;
    ad::Var context;         // 1 x MemoryDim
    ad::Var prev_alignment;  // T x 1
    ad::Var cum_alignment;   // T x 1
    Eigen::Index prev_peak = 0;
    Eigen::Index step = 0;
  };
  DecoderState InitialState(ad::Tape &tape, const Memory &memory) const;

  // Local location-sensitive attention for the current step. Energies are
  // evaluated only inside the window; the context is their softmax-weighted
  // sum of memory rows.
  struct Attention {
    ad::Var context;  // 1 x MemoryDim
    ad::Var weights;  // 1 x support
    AttentionAlignment alignment;
  };
  Attention Attend(ad::Tape &tape, ad::Var query, const Memory &memory,
                   const DecoderState &state) const;

  // Prenet over a block of (normalized) frames; row r uses the dropout mask
  // of decoder step first_step + r.
  ad::Var Prenet(ad::Tape &tape, ad::Var frames, Eigen::Index first_step, bool training,
                 std::uint64_t dropout_seed) const;

  // One decoder step from a prenet row. Returns the 1 x 80 normalized frame
  // and advances `state`. Throws if state->step >= T.
  ad::Var DecodeStep(ad::Tape &tape, DecoderState *state, ad::Var prenet_row,
                     const Memory &memory, AttentionAlignment *alignment) const;

  ad::Var Postnet(ad::Tape &tape, ad::Var frames) const;

  struct Output {
    ad::Var pre;   // T x 80, normalized mel space
    ad::Var post;  // T x 80, normalized mel space
    std::vector<AttentionAlignment> alignments;
  };
  Output TeacherForced(ad::Tape &tape, const Matrix &content, const RowVector &speaker,
                       const Matrix &target, std::uint64_t dropout_seed) const;
  Output FreeRunning(ad::Tape &tape, const Matrix &content, const RowVector &speaker,
                     std::uint64_t dropout_seed) const;

  struct Conversion {
    Matrix mel;      // T x 80 log-mel (post-net)
    Matrix mel_pre;  // T x 80 log-mel (pre-net)
    std::vector<AttentionAlignment> alignments;
  };
  // Runs exactly T = content.rows() free-running steps.
  Conversion Convert(const Matrix &content, const RowVector &speaker,
                     std::uint64_t dropout_seed) const;

  Matrix NormalizeMel(const Matrix &mel) const;
  Matrix DenormalizeMel(const Matrix &mel) const;

  const ConversionConfig &config() const { return config_; }
  nn::ParameterStore &params() { return params_; }
  const nn::ParameterStore &params() const { return params_; }

 private:
  void CheckInputs(const Matrix &content, const RowVector &speaker) const;

  ConversionConfig config_;
  nn::ParameterStore params_;
};

struct ConversionLosses {
  double pre = 0.0;
  double post = 0.0;
};

// Teacher-forced (MSE(pre) + MSE(post)) in normalized mel space, averaged
// over items; item i draws its dropout masks from MixSeed(dropout_seed, i).
// The per-term batch means go to *losses.
ad::Var CmBatchLoss(ad::Tape &tape, const ConversionModel &model,
                    std::span<const ConversionItem> batch, std::uint64_t dropout_seed,
                    ConversionLosses *losses);

// Teacher-forced dual MSE (pre- and post-postnet) in normalized mel space,
// averaged over items, then one optimizer update.
ConversionLosses CmTrainStep(ConversionModel *model, nn::Adam *optimizer,
                             std::span<const ConversionItem> batch, std::uint64_t dropout_seed);

// Same losses without an update.
ConversionLosses CmLoss(const ConversionModel &model, std::span<const ConversionItem> batch,
                        std::uint64_t dropout_seed);

}  // namespace clvc

#endif  // CLVC_CONVERSION_MODEL_HPP_
