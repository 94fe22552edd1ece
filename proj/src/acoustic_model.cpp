// acoustic_model.cpp

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

#include "clvc/acoustic_model.hpp"

#include <algorithm>
#include <cmath>

namespace clvc {

const char *ContentModeName(ContentMode mode) {
  return mode == ContentMode::kMppg ? "mppg" : "dpf";
}

ContentMode ParseContentMode(const std::string &name) {
  if (name == "mppg" || name == "mPPG") return ContentMode::kMppg;
  if (name == "dpf" || name == "DPF") return ContentMode::kDpf;
  throw PreconditionError("unknown content mode '" + name + "' (expected mppg or dpf)");
}

void AcousticModelConfig::Validate() const {
  if (input_dim <= 0 || num_layers <= 0 || num_phonemes <= 1 || PerDirection() <= 0)
    throw PreconditionError("acoustic model dimensions must be positive");
  if (!hidden_per_direction && hidden % 2 != 0)
    throw PreconditionError("total hidden size must be even");
}

std::string AcousticModel::LayerName(int layer, bool backward) {
  return "am.l" + std::to_string(layer) + (backward ? ".bwd" : ".fwd");
}

AcousticModel::AcousticModel(const AcousticModelConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  Rng rng(seed);
  nn::AddNormalizer(&params_, "am.input", config_.input_dim);
  int in = config_.input_dim;
  const int h = config_.PerDirection();
  for (int l = 0; l < config_.num_layers; ++l) {
    nn::AddLstm(&params_, LayerName(l, false), in, h, rng);
    nn::AddLstm(&params_, LayerName(l, true), in, h, rng);
    in = 2 * h;
  }
  nn::AddLinear(&params_, "am.out", in, config_.num_phonemes, rng);
}

AcousticModel::AcousticModel(const AcousticModelConfig &config, nn::ParameterStore params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
  AcousticModel reference(config_, 0);
  for (const auto &[name, p] : reference.params().items()) {
    if (!params_.Contains(name))
      throw FormatError("acoustic model parameters lack '" + name + "'");
    const ad::Parameter &mine = params_.Get(name);
    if (mine.value.rows() != p.value.rows() || mine.value.cols() != p.value.cols())
      throw ShapeError("acoustic model parameter '" + name + "' has the wrong shape");
    params_.Get(name).trainable = p.trainable;
  }
}

AcousticModel::Outputs AcousticModel::Forward(ad::Tape &tape, const Matrix &features) const {
  if (features.cols() != config_.input_dim)
    throw ShapeError("acoustic model expects " + std::to_string(config_.input_dim) +
                     "-dim input, got " + std::to_string(features.cols()));
  if (features.rows() < 1) throw ShapeError("acoustic model input has no frames");
  ad::Var x = tape.Constant(nn::ApplyNormalizer(params_, "am.input", features));
  for (int l = 0; l < config_.num_layers; ++l) {
    ad::Var fwd = nn::RunLstm(tape, params_, LayerName(l, false), x, 1, false);
    ad::Var bwd = nn::RunLstm(tape, params_, LayerName(l, true), x, 1, true);
    x = ad::ConcatCols({fwd, bwd});
  }
  return {x, nn::Linear(tape, params_, "am.out", x)};
}

AcousticModel::Posteriors AcousticModel::Infer(const Matrix &features) const {
  ad::Tape tape(false);
  Outputs out = Forward(tape, features);
  ad::Var probs = ad::SoftmaxRows(out.logits);
  return {probs.value(), out.dpf.value()};
}

FrameLabels AcousticModel::Decode(const Matrix &features) const {
  Matrix probs = Infer(features).mppg;
  FrameLabels labels(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    Eigen::Index k;
    probs.row(t).maxCoeff(&k);
    labels[static_cast<std::size_t>(t)] = static_cast<int>(k);
  }
  return labels;
}

ad::Var AmBatchLoss(ad::Tape &tape, const AcousticModel &model,
                    std::span<const LabeledUtterance> batch) {
  if (batch.empty()) throw PreconditionError("empty training batch");
  double total_frames = 0.0;
  for (const auto &u : batch) {
    if (static_cast<Eigen::Index>(u.labels.size()) != u.features.rows())
      throw ShapeError("label count " + std::to_string(u.labels.size()) +
                       " does not match frame count " + std::to_string(u.features.rows()));
    total_frames += static_cast<double>(u.labels.size());
  }
  ad::Var loss;
  for (const auto &u : batch) {
    ad::Var ce = ad::SoftmaxCrossEntropy(model.Forward(tape, u.features).logits, u.labels);
    ce = ad::Scale(ce, static_cast<double>(u.labels.size()) / total_frames);
    loss = loss.valid() ? ad::Add(loss, ce) : ce;
  }
  return loss;
}

double AmTrainStep(AcousticModel *model, nn::Adam *optimizer,
                   std::span<const LabeledUtterance> batch) {
  ad::Tape tape;
  ad::Var loss = AmBatchLoss(tape, *model, batch);
  const double value = loss.scalar();
  if (!std::isfinite(value))
    throw NumericError("acoustic model loss is not finite (step " +
                       std::to_string(optimizer->steps() + 1) + ")");
  model->params().ZeroGrad();
  tape.Backward(loss);
  optimizer->Step(&model->params());
  return value;
}

double AmLoss(const AcousticModel &model, std::span<const LabeledUtterance> batch) {
  ad::Tape tape(false);
  return AmBatchLoss(tape, model, batch).scalar();
}

double FrameAccuracy(const AcousticModel &model, std::span<const LabeledUtterance> data) {
  std::size_t correct = 0, total = 0;
  for (const auto &u : data) {
    FrameLabels pred = model.Decode(u.features);
    for (std::size_t t = 0; t < pred.size(); ++t) correct += pred[t] == u.labels[t];
    total += pred.size();
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::vector<int> CollapseRepeats(std::span<const int> labels) {
  std::vector<int> out;
  for (int l : labels)
    if (out.empty() || out.back() != l) out.push_back(l);
  return out;
}

std::size_t EditDistance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double PhonemeErrorRate(std::span<const int> pred, std::span<const int> ref) {
  if (ref.empty()) throw PreconditionError("phoneme error rate: empty reference");
  if (pred.empty()) throw PreconditionError("phoneme error rate: empty prediction");
  std::vector<int> p = CollapseRepeats(pred), r = CollapseRepeats(ref);
  return static_cast<double>(EditDistance(p, r)) / static_cast<double>(r.size());
}

Matrix ExtractPhoneticFeatures(const FrontEndFeatures &front, ContentMode mode,
                               const AcousticModel &model) {
  AcousticModel::Posteriors post = model.Infer(front.context_mfcc);
  const Matrix &content = mode == ContentMode::kMppg ? post.mppg : post.dpf;
  Matrix out(content.rows(), content.cols() + kProsodyDim);
  out << content, front.prosody;
  return out;
}

Matrix ExtractPhoneticFeatures(const AudioClip &clip, ContentMode mode,
                               const AcousticModel &model) {
  return ExtractPhoneticFeatures(ComputeFrontEnd(clip), mode, model);
}

}  // namespace clvc
