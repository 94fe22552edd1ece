// speaker_encoder.cpp

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

#include "clvc/speaker_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace clvc {

void SpeakerEncoderConfig::Validate() const {
  if (mel_dim <= 0 || hidden <= 0 || num_layers <= 0 || embedding_dim <= 0 || min_frames <= 0)
    throw PreconditionError("speaker encoder dimensions must be positive");
  if (!(w_init > 0.0)) throw PreconditionError("GE2E scale must start positive");
}

SpeakerEncoder::SpeakerEncoder(const SpeakerEncoderConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  Rng rng(seed);
  nn::AddNormalizer(&params_, "se.input", config_.mel_dim);
  int in = config_.mel_dim;
  for (int l = 0; l < config_.num_layers; ++l) {
    nn::AddLstm(&params_, "se.l" + std::to_string(l), in, config_.hidden, rng);
    in = config_.hidden;
  }
  nn::AddLinear(&params_, "se.proj", in, config_.embedding_dim, rng);
  params_.Add("se.ge2e.w", Matrix::Constant(1, 1, config_.w_init));
  params_.Add("se.ge2e.b", Matrix::Constant(1, 1, config_.b_init));
}

SpeakerEncoder::SpeakerEncoder(const SpeakerEncoderConfig &config, nn::ParameterStore params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
  SpeakerEncoder reference(config_, 0);
  for (const auto &[name, p] : reference.params().items()) {
    if (!params_.Contains(name))
      throw FormatError("speaker encoder parameters lack '" + name + "'");
    ad::Parameter &mine = params_.Get(name);
    if (mine.value.rows() != p.value.rows() || mine.value.cols() != p.value.cols())
      throw ShapeError("speaker encoder parameter '" + name + "' has the wrong shape");
    mine.trainable = p.trainable;
  }
}

ad::Var SpeakerEncoder::Forward(ad::Tape &tape, std::span<const Matrix> windows) const {
  if (windows.empty()) throw PreconditionError("speaker encoder: no input windows");
  const Eigen::Index frames = windows[0].rows();
  const auto batch = static_cast<Eigen::Index>(windows.size());
  if (frames < config_.min_frames)
    throw PreconditionError("speaker encoder window too short: " + std::to_string(frames) +
                            " < " + std::to_string(config_.min_frames) + " frames");
  Matrix x(frames * batch, config_.mel_dim);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix &w = windows[static_cast<std::size_t>(b)];
    if (w.rows() != frames) throw ShapeError("speaker encoder: windows differ in length");
    if (w.cols() != config_.mel_dim) throw ShapeError("speaker encoder: wrong mel dimension");
    Matrix norm = nn::ApplyNormalizer(params_, "se.input", w);
    for (Eigen::Index t = 0; t < frames; ++t) x.row(t * batch + b) = norm.row(t);
  }
  ad::Var h = tape.Constant(std::move(x));
  ad::Var last;
  for (int l = 0; l < config_.num_layers; ++l)
    h = nn::RunLstm(tape, params_, "se.l" + std::to_string(l), h, batch, false, &last);
  return ad::L2NormalizeRows(nn::Linear(tape, params_, "se.proj", last));
}

RowVector SpeakerEncoder::Embed(const Matrix &mel) const {
  ad::Tape tape(false);
  const Matrix windows[] = {mel};
  return Forward(tape, windows).value().row(0);
}

ad::Var Ge2eLoss(ad::Var embeddings, int num_speakers, int utterances_per_speaker, ad::Var w,
                 ad::Var b) {
  const int n = num_speakers, m = utterances_per_speaker;
  if (n < 2 || m < 2) throw PreconditionError("GE2E needs at least 2 speakers x 2 utterances");
  if (embeddings.rows() != static_cast<Eigen::Index>(n) * m)
    throw ShapeError("GE2E: expected N*M embedding rows");
  const Vector norms = embeddings.value().rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r)
    if (std::abs(norms(r) - 1.0) > 1e-3) throw PreconditionError("GE2E: embeddings must be unit-norm");

  ad::Tape &tape = *embeddings.tape();
  const Eigen::Index rows = embeddings.rows();
  Matrix assign = Matrix::Zero(n, rows);  // speaker-sum operator
  Matrix own_mask = Matrix::Zero(rows, n);
  std::vector<Eigen::Index> speaker_of(static_cast<std::size_t>(rows));
  std::vector<int> labels(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int j = static_cast<int>(r / m);
    assign(j, r) = 1.0;
    own_mask(r, j) = 1.0;
    speaker_of[static_cast<std::size_t>(r)] = j;
    labels[static_cast<std::size_t>(r)] = j;
  }
  ad::Var unit = ad::L2NormalizeRows(embeddings);
  ad::Var sums = ad::MatMul(tape.Constant(assign), embeddings);
  ad::Var centroids = ad::L2NormalizeRows(ad::Scale(sums, 1.0 / m));
  ad::Var exclusive = ad::L2NormalizeRows(
      ad::Scale(ad::Sub(ad::GatherRows(sums, speaker_of), embeddings), 1.0 / (m - 1)));

  ad::Var sim_all = ad::MatMul(unit, ad::Transpose(centroids));
  ad::Var sim_own = ad::RowSums(ad::Mul(unit, exclusive));
  ad::Var sim = ad::Add(
      ad::Mul(sim_all, tape.Constant(Matrix::Ones(rows, n) - own_mask)),
      ad::Mul(ad::MatMul(sim_own, tape.Constant(Matrix::Ones(1, n))), tape.Constant(own_mask)));
  ad::Var logits = ad::AddScalar(ad::MulScalar(sim, w), b);
  return ad::SoftmaxCrossEntropy(logits, labels);
}

double Ge2eLossValue(const Matrix &embeddings, int num_speakers, int utterances_per_speaker,
                     double w, double b) {
  ad::Tape tape(false);
  return Ge2eLoss(tape.Constant(embeddings), num_speakers, utterances_per_speaker,
                  tape.Constant(Matrix::Constant(1, 1, w)),
                  tape.Constant(Matrix::Constant(1, 1, b)))
      .scalar();
}

double SeTrainStep(SpeakerEncoder *encoder, nn::Adam *optimizer,
                   std::span<const Matrix> windows, int num_speakers,
                   int utterances_per_speaker) {
  ad::Tape tape;
  const nn::ParameterStore &params = encoder->params();
  ad::Var emb = encoder->Forward(tape, windows);
  ad::Var loss = Ge2eLoss(emb, num_speakers, utterances_per_speaker,
                          tape.Param(params.Get("se.ge2e.w")), tape.Param(params.Get("se.ge2e.b")));
  const double value = loss.scalar();
  if (!std::isfinite(value)) throw NumericError("GE2E loss is not finite");
  encoder->params().ZeroGrad();
  tape.Backward(loss);
  optimizer->Step(&encoder->params());
  Matrix &w = encoder->params().Get("se.ge2e.w").value;
  w(0, 0) = std::max(w(0, 0), 1e-6);
  return value;
}

EnrollmentSet EnrollSpeaker(const std::string &speaker_id, std::span<const AudioClip> clips,
                            const SpeakerEncoder &encoder, const EnrollOptions &options,
                            std::uint64_t seed) {
  if (options.num_segments < 1) throw PreconditionError("enrollment needs at least one segment");
  std::vector<std::size_t> seg_len(clips.size()), slots(clips.size());
  std::size_t total_slots = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    ValidateClip(clips[i]);
    seg_len[i] = static_cast<std::size_t>(std::lround(options.segment_seconds * clips[i].sample_rate));
    slots[i] = seg_len[i] ? clips[i].samples.size() / seg_len[i] : 0;
    total_slots += slots[i];
  }
  if (total_slots == 0)
    throw PreconditionError("insufficient audio to enroll speaker '" + speaker_id +
                            "': no clip holds a full segment");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(options.num_segments),
                                              total_slots);
  Rng rng(seed);
  EnrollmentSet set;
  set.speaker_id = speaker_id;
  set.segment_embeddings.resize(static_cast<Eigen::Index>(k), encoder.config().embedding_dim);
  for (std::size_t s = 0; s < k; ++s) {
    std::uint64_t pick = UniformIndex(rng, total_slots);
    std::size_t c = 0;
    while (pick >= slots[c]) pick -= slots[c++];
    const std::size_t span = clips[c].samples.size() - seg_len[c];
    const std::size_t offset = static_cast<std::size_t>(UniformIndex(rng, span + 1));
    set.segments.push_back({c, offset});

    AudioClip segment;
    segment.sample_rate = clips[c].sample_rate;
    segment.samples.assign(clips[c].samples.begin() + static_cast<std::ptrdiff_t>(offset),
                           clips[c].samples.begin() + static_cast<std::ptrdiff_t>(offset + seg_len[c]));
    set.segment_embeddings.row(static_cast<Eigen::Index>(s)) =
        encoder.Embed(ComputeMelSpectrogram(segment).values);
  }
  RowVector mean = set.segment_embeddings.colwise().mean();
  set.aggregate = mean / mean.norm();
  return set;
}

double CosineSimilarity(const RowVector &a, const RowVector &b) {
  return a.dot(b) / (a.norm() * b.norm());
}

double EqualErrorRate(std::span<const double> scores, std::span<const bool> same_speaker) {
  if (scores.size() != same_speaker.size()) throw ShapeError("EER: scores/labels size mismatch");
  std::size_t n_same = 0, n_diff = 0;
  for (bool s : same_speaker) (s ? n_same : n_diff)++;
  if (n_same == 0 || n_diff == 0) throw PreconditionError("EER needs both trial classes");

  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  // FAR falls and FRR rises as the threshold increases.
  std::vector<double> far(thresholds.size()), frr(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    std::size_t fa = 0, fr = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      const bool accept = scores[j] >= thresholds[i];
      if (same_speaker[j] && !accept) ++fr;
      if (!same_speaker[j] && accept) ++fa;
    }
    far[i] = static_cast<double>(fa) / static_cast<double>(n_diff);
    frr[i] = static_cast<double>(fr) / static_cast<double>(n_same);
  }
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i) {
    const double d0 = far[i] - frr[i], d1 = far[i + 1] - frr[i + 1];
    if (d0 == 0.0) return far[i];
    if (d0 > 0.0 && d1 <= 0.0) {
      const double lambda = d0 / (d0 - d1);
      return far[i] + lambda * (far[i + 1] - far[i]);
    }
  }
  return far.back();
}

}  // namespace clvc
