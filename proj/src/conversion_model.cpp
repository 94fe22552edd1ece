// conversion_model.cpp

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

#include "clvc/conversion_model.hpp"

#include <algorithm>
#include <cmath>

namespace clvc {

namespace {

std::string Conv(int i) { return "cm.enc.conv" + std::to_string(i); }
std::string PrenetLayer(std::size_t i) { return "cm.prenet" + std::to_string(i); }
std::string PostnetLayer(int i) { return "cm.postnet" + std::to_string(i); }

RowVector DropoutMask(std::uint64_t seed, Eigen::Index step, std::size_t layer, int dim,
                      double rate) {
  Rng rng(MixSeed(MixSeed(seed, static_cast<std::uint64_t>(step)), layer));
  RowVector mask(dim);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < dim; ++i) mask(i) = Uniform01(rng) >= rate ? keep_scale : 0.0;
  return mask;
}

}  // namespace

void ConversionConfig::Validate() const {
  if (content_dim <= 0 || speaker_dim <= 0 || encoder_dim <= 0 || attention_dim <= 0 ||
      location_channels <= 0 || attention_rnn_dim <= 0 || decoder_rnn_dim <= 0)
    throw PreconditionError("conversion model dimensions must be positive");
  if (encoder_dim % 2 != 0) throw PreconditionError("encoder_dim must be even (BLSTM)");
  if (encoder_conv_layers < 0 || (encoder_conv_layers > 0 && encoder_conv_channels <= 0))
    throw PreconditionError("bad encoder conv stack");
  for (int k : {encoder_kernel, location_kernel, postnet_kernel})
    if (k < 1 || k % 2 == 0) throw PreconditionError("convolution kernels must be odd");
  if (prenet_dims.empty()) throw PreconditionError("prenet needs at least one layer");
  for (int d : prenet_dims)
    if (d <= 0) throw PreconditionError("prenet widths must be positive");
  if (!(prenet_dropout >= 0.0 && prenet_dropout < 1.0))
    throw PreconditionError("prenet dropout must be in [0, 1)");
  if (postnet_layers < 1 || postnet_channels <= 0) throw PreconditionError("bad postnet");
  if (mel_dim != kNumMels) throw PreconditionError("mel_dim must be 80");
  if (window_left < 0 || window_right < 0) throw PreconditionError("window sizes must be >= 0");
}

RowVector AttentionAlignment::Dense(Eigen::Index frames) const {
  RowVector out = RowVector::Zero(frames);
  out.segment(begin, weights.size()) = weights;
  return out;
}

bool AlignmentWithinWindow(const AttentionAlignment &a, int left, int right, double tol) {
  if (a.weights.size() == 0) return false;
  if (a.begin < a.center - left || a.end() - 1 > a.center + right) return false;
  if ((a.weights.array() < 0.0).any()) return false;
  return std::abs(a.weights.sum() - 1.0) <= tol;
}

ConversionModel::ConversionModel(const ConversionConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  const ConversionConfig &c = config_;
  Rng rng(seed);
  nn::AddNormalizer(&params_, "cm.input", c.content_dim);
  nn::AddNormalizer(&params_, "cm.mel", c.mel_dim);

  int in = c.content_dim;
  for (int i = 0; i < c.encoder_conv_layers; ++i) {
    nn::AddConv1d(&params_, Conv(i), in, c.encoder_conv_channels, c.encoder_kernel, rng);
    in = c.encoder_conv_channels;
  }
  nn::AddLstm(&params_, "cm.enc.fwd", in, c.encoder_dim / 2, rng);
  nn::AddLstm(&params_, "cm.enc.bwd", in, c.encoder_dim / 2, rng);

  const int mem = c.MemoryDim();
  auto glorot = [&rng](int fan_in, int fan_out) {
    return nn::InitUniform(fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out)), rng);
  };
  params_.Add("cm.att.memory.w", glorot(mem, c.attention_dim));
  params_.Add("cm.att.query.w", glorot(c.attention_rnn_dim, c.attention_dim));
  params_.Add("cm.att.loc_conv.w", glorot(2 * c.location_kernel, c.location_channels));
  params_.Add("cm.att.loc_dense.w", glorot(c.location_channels, c.attention_dim));
  params_.Add("cm.att.v.w", glorot(c.attention_dim, 1));

  in = c.mel_dim;
  for (std::size_t i = 0; i < c.prenet_dims.size(); ++i) {
    nn::AddLinear(&params_, PrenetLayer(i), in, c.prenet_dims[i], rng);
    in = c.prenet_dims[i];
  }
  nn::AddLstm(&params_, "cm.att_rnn", in + mem, c.attention_rnn_dim, rng);
  nn::AddLstm(&params_, "cm.dec_rnn", c.attention_rnn_dim + mem, c.decoder_rnn_dim, rng);
  nn::AddLinear(&params_, "cm.proj", c.decoder_rnn_dim + mem, c.mel_dim, rng);

  for (int i = 0; i < c.postnet_layers; ++i) {
    const int pin = i == 0 ? c.mel_dim : c.postnet_channels;
    const int pout = i == c.postnet_layers - 1 ? c.mel_dim : c.postnet_channels;
    nn::AddConv1d(&params_, PostnetLayer(i), pin, pout, c.postnet_kernel, rng);
  }
}

ConversionModel::ConversionModel(const ConversionConfig &config, nn::ParameterStore params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
  ConversionModel reference(config_, 0);
  for (const auto &[name, p] : reference.params().items()) {
    if (!params_.Contains(name))
      throw FormatError("conversion model parameters lack '" + name + "'");
    ad::Parameter &mine = params_.Get(name);
    if (mine.value.rows() != p.value.rows() || mine.value.cols() != p.value.cols())
      throw ShapeError("conversion model parameter '" + name + "' has the wrong shape");
    mine.trainable = p.trainable;
  }
  for (const auto &[name, p] : params_.items())
    if (!reference.params().Contains(name))
      throw FormatError("unexpected conversion model parameter '" + name + "'");
}

void ConversionModel::CheckInputs(const Matrix &content, const RowVector &speaker) const {
  if (content.cols() != config_.content_dim)
    throw ShapeError("conversion model expects content_dim " +
                     std::to_string(config_.content_dim) + ", got " +
                     std::to_string(content.cols()));
  if (content.rows() < 1) throw ShapeError("conversion model input has no frames");
  if (!content.allFinite()) throw NumericError("conversion model input is not finite");
  if (speaker.size() != config_.speaker_dim)
    throw ShapeError("speaker embedding must have " + std::to_string(config_.speaker_dim) +
                     " dims, got " + std::to_string(speaker.size()));
  if (std::abs(speaker.norm() - 1.0) > 1e-4)
    throw PreconditionError("speaker embedding must be unit-norm");
}

ad::Var ConversionModel::Encode(ad::Tape &tape, const Matrix &content,
                                const RowVector &speaker) const {
  CheckInputs(content, speaker);
  const Eigen::Index frames = content.rows();
  ad::Var x = tape.Constant(nn::ApplyNormalizer(params_, "cm.input", content));
  for (int i = 0; i < config_.encoder_conv_layers; ++i)
    x = ad::Relu(nn::Conv1d(tape, params_, Conv(i), x, config_.encoder_kernel));
  ad::Var fwd = nn::RunLstm(tape, params_, "cm.enc.fwd", x, 1, false);
  ad::Var bwd = nn::RunLstm(tape, params_, "cm.enc.bwd", x, 1, true);
  ad::Var spk = ad::BroadcastRows(tape.Constant(speaker), frames);
  return ad::ConcatCols({fwd, bwd, spk});
}

ConversionModel::Memory ConversionModel::PrepareMemory(ad::Tape &tape, ad::Var encoded) const {
  Memory m;
  m.values = encoded;
  m.processed = ad::MatMul(encoded, tape.Param(params_.Get("cm.att.memory.w")));
  m.frames = encoded.rows();
  return m;
}

ConversionModel::DecoderState ConversionModel::InitialState(ad::Tape &tape,
                                                            const Memory &memory) const {
  DecoderState s;
  s.att_h = tape.Constant(Matrix::Zero(1, config_.attention_rnn_dim));
  s.att_c = s.att_h;
  s.dec_h = tape.Constant(Matrix::Zero(1, config_.decoder_rnn_dim));
  s.dec_c = s.dec_h;
  s.context = tape.Constant(Matrix::Zero(1, config_.MemoryDim()));
  s.prev_alignment = tape.Constant(Matrix::Zero(memory.frames, 1));
  s.cum_alignment = s.prev_alignment;
  return s;
}

ConversionModel::Attention ConversionModel::Attend(ad::Tape &tape, ad::Var query,
                                                   const Memory &memory,
                                                   const DecoderState &state) const {
  const Eigen::Index frames = memory.frames;
  const Eigen::Index center =
      config_.window_center == WindowCenter::kStep ? state.step : state.prev_peak;
  const Eigen::Index lo = std::max<Eigen::Index>(0, center - config_.window_left);
  const Eigen::Index hi = std::min<Eigen::Index>(frames - 1, center + config_.window_right);
  const Eigen::Index n = hi - lo + 1;

  ad::Var loc = ad::UnfoldRows(ad::ConcatCols({state.prev_alignment, state.cum_alignment}),
                               config_.location_kernel, lo, hi + 1);
  loc = ad::MatMul(ad::MatMul(loc, tape.Param(params_.Get("cm.att.loc_conv.w"))),
                   tape.Param(params_.Get("cm.att.loc_dense.w")));
  ad::Var q = ad::MatMul(query, tape.Param(params_.Get("cm.att.query.w")));
  ad::Var pre = ad::Add(ad::Add(ad::SliceRows(memory.processed, lo, n), ad::BroadcastRows(q, n)), loc);
  ad::Var energies = ad::MatMul(ad::Tanh(pre), tape.Param(params_.Get("cm.att.v.w")));

  Attention a;
  a.weights = ad::SoftmaxRows(ad::Transpose(energies));
  a.context = ad::MatMul(a.weights, ad::SliceRows(memory.values, lo, n));
  a.alignment.step = state.step;
  a.alignment.center = center;
  a.alignment.begin = lo;
  a.alignment.weights = a.weights.value().row(0);
  return a;
}

ad::Var ConversionModel::Prenet(ad::Tape &tape, ad::Var frames, Eigen::Index first_step,
                                bool training, std::uint64_t dropout_seed) const {
  const bool dropout = config_.prenet_dropout > 0.0 &&
                       (training || config_.prenet_dropout_at_inference);
  ad::Var x = frames;
  for (std::size_t i = 0; i < config_.prenet_dims.size(); ++i) {
    x = ad::Relu(nn::Linear(tape, params_, PrenetLayer(i), x));
    if (dropout) {
      Matrix mask(x.rows(), x.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        mask.row(r) = DropoutMask(dropout_seed, first_step + r, i, config_.prenet_dims[i],
                                  config_.prenet_dropout);
      x = ad::Mul(x, tape.Constant(std::move(mask)));
    }
  }
  return x;
}

ad::Var ConversionModel::DecodeStep(ad::Tape &tape, DecoderState *state, ad::Var prenet_row,
                                    const Memory &memory, AttentionAlignment *alignment) const {
  if (state->step >= memory.frames)
    throw PreconditionError("decoder step " + std::to_string(state->step) +
                            " is beyond the source length " + std::to_string(memory.frames));
  const int att_dim = config_.attention_rnn_dim, dec_dim = config_.decoder_rnn_dim;

  ad::Var att_hc = nn::LstmStep(tape, params_, "cm.att_rnn",
                                ad::ConcatCols({prenet_row, state->context}), state->att_h,
                                state->att_c);
  state->att_h = ad::SliceCols(att_hc, 0, att_dim);
  state->att_c = ad::SliceCols(att_hc, att_dim, att_dim);

  Attention att = Attend(tape, state->att_h, memory, *state);
  ad::Var aligned = ad::ScatterRows(ad::Transpose(att.weights), memory.frames, att.alignment.begin);
  state->cum_alignment = ad::Add(state->cum_alignment, aligned);
  state->prev_alignment = aligned;
  Eigen::Index peak;
  att.alignment.weights.maxCoeff(&peak);
  state->prev_peak = att.alignment.begin + peak;

  ad::Var dec_hc = nn::LstmStep(tape, params_, "cm.dec_rnn",
                                ad::ConcatCols({state->att_h, att.context}), state->dec_h,
                                state->dec_c);
  state->dec_h = ad::SliceCols(dec_hc, 0, dec_dim);
  state->dec_c = ad::SliceCols(dec_hc, dec_dim, dec_dim);
  state->context = att.context;
  ++state->step;
  if (alignment) *alignment = std::move(att.alignment);
  return nn::Linear(tape, params_, "cm.proj", ad::ConcatCols({state->dec_h, att.context}));
}

ad::Var ConversionModel::Postnet(ad::Tape &tape, ad::Var frames) const {
  ad::Var x = frames;
  for (int i = 0; i < config_.postnet_layers; ++i) {
    x = nn::Conv1d(tape, params_, PostnetLayer(i), x, config_.postnet_kernel);
    if (i < config_.postnet_layers - 1) x = ad::Tanh(x);
  }
  return ad::Add(frames, x);
}

ConversionModel::Output ConversionModel::TeacherForced(ad::Tape &tape, const Matrix &content,
                                                       const RowVector &speaker,
                                                       const Matrix &target,
                                                       std::uint64_t dropout_seed) const {
  if (target.rows() != content.rows())
    throw ShapeError("content has " + std::to_string(content.rows()) + " frames but target has " +
                     std::to_string(target.rows()));
  if (target.cols() != config_.mel_dim) throw ShapeError("target must have 80 mel channels");
  Memory memory = PrepareMemory(tape, Encode(tape, content, speaker));
  const Eigen::Index frames = memory.frames;

  Matrix prev = Matrix::Zero(frames, config_.mel_dim);
  if (frames > 1) prev.bottomRows(frames - 1) = NormalizeMel(target.topRows(frames - 1));
  ad::Var prenet = Prenet(tape, tape.Constant(std::move(prev)), 0, true, dropout_seed);

  Output out;
  DecoderState state = InitialState(tape, memory);
  std::vector<ad::Var> steps;
  steps.reserve(static_cast<std::size_t>(frames));
  out.alignments.resize(static_cast<std::size_t>(frames));
  for (Eigen::Index t = 0; t < frames; ++t)
    steps.push_back(DecodeStep(tape, &state, ad::SliceRows(prenet, t, 1), memory,
                               &out.alignments[static_cast<std::size_t>(t)]));
  out.pre = ad::ConcatRows(steps);
  out.post = Postnet(tape, out.pre);
  return out;
}

ConversionModel::Output ConversionModel::FreeRunning(ad::Tape &tape, const Matrix &content,
                                                     const RowVector &speaker,
                                                     std::uint64_t dropout_seed) const {
  Memory memory = PrepareMemory(tape, Encode(tape, content, speaker));
  const Eigen::Index frames = memory.frames;
  Output out;
  DecoderState state = InitialState(tape, memory);
  std::vector<ad::Var> steps;
  steps.reserve(static_cast<std::size_t>(frames));
  out.alignments.resize(static_cast<std::size_t>(frames));
  ad::Var prev = tape.Constant(Matrix::Zero(1, config_.mel_dim));  // go frame
  for (Eigen::Index t = 0; t < frames; ++t) {
    ad::Var prenet = Prenet(tape, prev, t, false, dropout_seed);
    prev = DecodeStep(tape, &state, prenet, memory, &out.alignments[static_cast<std::size_t>(t)]);
    steps.push_back(prev);
  }
  out.pre = ad::ConcatRows(steps);
  out.post = Postnet(tape, out.pre);
  return out;
}

ConversionModel::Conversion ConversionModel::Convert(const Matrix &content,
                                                     const RowVector &speaker,
                                                     std::uint64_t dropout_seed) const {
  ad::Tape tape(false);
  Output out = FreeRunning(tape, content, speaker, dropout_seed);
  Conversion c;
  c.mel = DenormalizeMel(out.post.value());
  c.mel_pre = DenormalizeMel(out.pre.value());
  c.alignments = std::move(out.alignments);
  return c;
}

Matrix ConversionModel::NormalizeMel(const Matrix &mel) const {
  return nn::ApplyNormalizer(params_, "cm.mel", mel);
}

Matrix ConversionModel::DenormalizeMel(const Matrix &mel) const {
  const Matrix &mean = params_.Get("cm.mel.mean").value;
  const Matrix &stdev = params_.Get("cm.mel.std").value;
  return ((mel.array().rowwise() * stdev.row(0).array()).rowwise() + mean.row(0).array()).matrix();
}

ad::Var CmBatchLoss(ad::Tape &tape, const ConversionModel &model,
                    std::span<const ConversionItem> batch, std::uint64_t dropout_seed,
                    ConversionLosses *losses) {
  if (batch.empty()) throw PreconditionError("empty training batch");
  ad::Var total;
  const double w = 1.0 / static_cast<double>(batch.size());
  *losses = {};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ConversionItem &item = batch[i];
    auto out = model.TeacherForced(tape, item.content, item.speaker, item.target,
                                   MixSeed(dropout_seed, i));
    ad::Var target = tape.Constant(model.NormalizeMel(item.target));
    ad::Var pre = ad::Mse(out.pre, target);
    ad::Var post = ad::Mse(out.post, target);
    losses->pre += w * pre.scalar();
    losses->post += w * post.scalar();
    ad::Var item_loss = ad::Scale(ad::Add(pre, post), w);
    total = total.valid() ? ad::Add(total, item_loss) : item_loss;
  }
  return total;
}

ConversionLosses CmTrainStep(ConversionModel *model, nn::Adam *optimizer,
                             std::span<const ConversionItem> batch, std::uint64_t dropout_seed) {
  ad::Tape tape;
  ConversionLosses losses;
  ad::Var loss = CmBatchLoss(tape, *model, batch, dropout_seed, &losses);
  if (!std::isfinite(loss.scalar())) throw NumericError("conversion loss is not finite");
  model->params().ZeroGrad();
  tape.Backward(loss);
  optimizer->Step(&model->params());
  return losses;
}

ConversionLosses CmLoss(const ConversionModel &model, std::span<const ConversionItem> batch,
                        std::uint64_t dropout_seed) {
  ad::Tape tape(false);
  ConversionLosses losses;
  CmBatchLoss(tape, model, batch, dropout_seed, &losses);
  return losses;
}

}  // namespace clvc
