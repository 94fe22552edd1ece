// test_conversion_model.cpp

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


#include <doctest.h>

#include <cmath>
#include <limits>

#include "clvc/conversion_model.hpp"
#include "test_util.hpp"

using namespace clvc;

namespace {

ConversionConfig Micro() {
  ConversionConfig c;
  c.content_dim = 4;
  c.speaker_dim = 3;
  c.encoder_conv_layers = 1;
  c.encoder_conv_channels = 4;
  c.encoder_kernel = 3;
  c.encoder_dim = 4;
  c.attention_dim = 3;
  c.location_channels = 2;
  c.location_kernel = 3;
  c.prenet_dims = {4, 3};
  c.attention_rnn_dim = 4;
  c.decoder_rnn_dim = 4;
  c.postnet_layers = 2;
  c.postnet_channels = 3;
  c.postnet_kernel = 3;
  c.window_left = 2;
  c.window_right = 2;
  return c;
}

ConversionConfig Small() {
  ConversionConfig c;
  c.content_dim = 6;
  c.speaker_dim = 4;
  c.encoder_conv_layers = 1;
  c.encoder_conv_channels = 8;
  c.encoder_dim = 8;
  c.attention_dim = 8;
  c.location_channels = 4;
  c.prenet_dims = {16, 16};
  c.attention_rnn_dim = 16;
  c.decoder_rnn_dim = 16;
  c.postnet_layers = 2;
  c.postnet_channels = 8;
  return c;
}

RowVector UnitSpeaker(Rng &rng, int dim) {
  RowVector s = testing::RandomMatrix(rng, 1, dim);
  return s / s.norm();
}

// Independent parameter count from the architecture description.
std::size_t ExpectedParameterCount(const ConversionConfig &c) {
  auto lstm = [](std::size_t in, std::size_t h) { return in * 4 * h + h * 4 * h + 4 * h; };
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t mem = c.encoder_dim + c.speaker_dim;
  std::size_t n = 2 * c.content_dim + 2 * c.mel_dim;  // normalizers
  std::size_t in = c.content_dim;
  for (int i = 0; i < c.encoder_conv_layers; ++i) {
    n += linear(c.encoder_kernel * in, c.encoder_conv_channels);
    in = c.encoder_conv_channels;
  }
  n += 2 * lstm(in, c.encoder_dim / 2);
  n += mem * c.attention_dim + c.attention_rnn_dim * c.attention_dim +
       2 * c.location_kernel * c.location_channels + c.location_channels * c.attention_dim +
       c.attention_dim;
  in = c.mel_dim;
  for (int d : c.prenet_dims) {
    n += linear(in, d);
    in = d;
  }
  n += lstm(in + mem, c.attention_rnn_dim);
  n += lstm(c.attention_rnn_dim + mem, c.decoder_rnn_dim);
  n += linear(c.decoder_rnn_dim + mem, c.mel_dim);
  for (int i = 0; i < c.postnet_layers; ++i) {
    const std::size_t pin = i == 0 ? c.mel_dim : c.postnet_channels;
    const std::size_t pout = i == c.postnet_layers - 1 ? c.mel_dim : c.postnet_channels;
    n += linear(c.postnet_kernel * pin, pout);
  }
  return n;
}

}  // namespace

TEST_CASE("parameter count audit; no stop-token head") {
  for (const ConversionConfig &c : {Micro(), Small(), ConversionConfig{}}) {
    ConversionModel m(c, 1);
    CHECK(m.params().CountValues() == ExpectedParameterCount(c));
    for (const auto &[name, p] : m.params().items()) {
      CHECK(name.find("stop") == std::string::npos);
      CHECK(name.find("gate") == std::string::npos);
      // The only scalar-output projection is the attention vector.
      if (p.value.cols() == 1) CHECK(name == "cm.att.v.w");
    }
  }
}

TEST_CASE("output length equals input length") {
  ConversionModel m(Small(), 2);
  Rng rng(3);
  const RowVector spk = UnitSpeaker(rng, 4);
  for (Eigen::Index t : {1, 2, 13, 40}) {
    ConversionModel::Conversion out = m.Convert(testing::RandomMatrix(rng, t, 6), spk, 5);
    CHECK(out.mel.rows() == t);
    CHECK(out.mel.cols() == 80);
    CHECK(out.mel_pre.rows() == t);
    CHECK(static_cast<Eigen::Index>(out.alignments.size()) == t);
  }
}

TEST_CASE("decoding past the source length throws") {
  ConversionModel m(Micro(), 4);
  Rng rng(5);
  ad::Tape tape(false);
  auto mem = m.PrepareMemory(tape, m.Encode(tape, testing::RandomMatrix(rng, 2, 4), UnitSpeaker(rng, 3)));
  auto state = m.InitialState(tape, mem);
  ad::Var pre = m.Prenet(tape, tape.Constant(Matrix::Zero(1, 80)), 0, false, 1);
  m.DecodeStep(tape, &state, pre, mem, nullptr);
  m.DecodeStep(tape, &state, pre, mem, nullptr);
  CHECK_THROWS_AS(m.DecodeStep(tape, &state, pre, mem, nullptr), PreconditionError);
}

TEST_CASE("zero attention energies give uniform windows of 31 and 61") {
  ConversionModel m(Small(), 6);
  m.params().Get("cm.att.v.w").value.setZero();
  Rng rng(7);
  auto out = m.Convert(testing::RandomMatrix(rng, 100, 6), UnitSpeaker(rng, 4), 8);
  const auto &a0 = out.alignments[0];
  CHECK(a0.begin == 0);
  CHECK(a0.weights.size() == 31);
  CHECK(a0.weights(0) == doctest::Approx(1.0 / 31));
  const auto &a50 = out.alignments[50];
  CHECK(a50.begin == 20);
  CHECK(a50.weights.size() == 61);
  CHECK((a50.weights.array() - 1.0 / 61).abs().maxCoeff() < 1e-15);
  CHECK(out.alignments[99].weights.size() == 31);
}

TEST_CASE("windowed attention equals a masked softmax over the full sequence") {
  ConversionConfig cfg = Small();
  cfg.window_left = 5;
  cfg.window_right = 3;
  ConversionModel m(cfg, 9);
  Rng rng(10);
  const Eigen::Index t = 30;
  ad::Tape tape(false);
  auto mem = m.PrepareMemory(tape, m.Encode(tape, testing::RandomMatrix(rng, t, 6), UnitSpeaker(rng, 4)));
  for (Eigen::Index step : {0, 1, 4, 17, 28, 29}) {
    auto state = m.InitialState(tape, mem);
    Matrix prev = testing::RandomMatrix(rng, t, 1).cwiseAbs();
    Matrix cum = prev + testing::RandomMatrix(rng, t, 1).cwiseAbs();
    state.prev_alignment = tape.Constant(prev);
    state.cum_alignment = tape.Constant(cum);
    state.step = step;
    Matrix query = testing::RandomMatrix(rng, 1, 16);
    auto att = m.Attend(tape, tape.Constant(query), mem, state);

    RowVector e = testing::DenseEnergies(m, mem.processed.value(), query, prev, cum);
    for (Eigen::Index j = 0; j < t; ++j)
      if (j < step - 5 || j > step + 3) e(j) = -std::numeric_limits<double>::infinity();
    RowVector w = (e.array() - e.maxCoeff()).exp().matrix();
    w /= w.sum();
    CHECK((att.alignment.Dense(t) - w).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(AlignmentWithinWindow(att.alignment, 5, 3));
  }
}

TEST_CASE("previous-peak centering keeps the window law") {
  ConversionConfig cfg = Small();
  cfg.window_center = WindowCenter::kPreviousPeak;
  cfg.window_left = cfg.window_right = 4;
  ConversionModel m(cfg, 11);
  Rng rng(12);
  auto out = m.Convert(testing::RandomMatrix(rng, 25, 6), UnitSpeaker(rng, 4), 13);
  for (const auto &a : out.alignments) CHECK(AlignmentWithinWindow(a, 4, 4));
}

TEST_CASE("conversion model gradients match central differences") {
  ConversionModel m(Micro(), 14);
  Rng rng(15);
  std::vector<ConversionItem> batch;
  for (Eigen::Index t : {6, 4}) {
    ConversionItem item;
    item.content = testing::RandomMatrix(rng, t, 4);
    item.speaker = UnitSpeaker(rng, 3);
    item.target = testing::RandomMatrix(rng, t, 80);
    batch.push_back(item);
  }
  auto r = testing::CheckGradients(m.params(), [&](ad::Tape &t) {
    ConversionLosses l;
    return CmBatchLoss(t, m, batch, 16, &l);
  }, 8, 1e-4);
  INFO(r.worst_parameter);
  CHECK(r.worst_relative < 1e-5);
}

TEST_CASE("a model that outputs the mel mean has zero loss on the mean") {
  ConversionModel m(Micro(), 17);
  m.params().Get("cm.proj.w").value.setZero();
  m.params().Get("cm.proj.b").value.setZero();
  m.params().Get("cm.postnet1.w").value.setZero();
  m.params().Get("cm.postnet1.b").value.setZero();
  Rng rng(18);
  ConversionItem item{testing::RandomMatrix(rng, 5, 4), UnitSpeaker(rng, 3), Matrix()};
  item.target = m.params().Get("cm.mel.mean").value.replicate(5, 1);
  ConversionLosses l = CmLoss(m, std::span(&item, 1), 19);
  CHECK(l.pre == 0.0);
  CHECK(l.post == 0.0);
}

TEST_CASE("dropout masks are a function of the seed and step only") {
  ConversionModel m(Small(), 20);
  Rng rng(21);
  Matrix c = testing::RandomMatrix(rng, 12, 6);
  RowVector s = UnitSpeaker(rng, 4);
  CHECK(m.Convert(c, s, 5).mel == m.Convert(c, s, 5).mel);
  CHECK(m.Convert(c, s, 5).mel != m.Convert(c, s, 6).mel);
  ConversionConfig det = Small();
  det.prenet_dropout_at_inference = false;
  ConversionModel md(det, 20);
  CHECK(md.Convert(c, s, 5).mel == md.Convert(c, s, 6).mel);
}

TEST_CASE("input validation") {
  ConversionModel m(Micro(), 22);
  Rng rng(23);
  CHECK_THROWS_AS(m.Convert(testing::RandomMatrix(rng, 3, 5), UnitSpeaker(rng, 3), 1), ShapeError);
  CHECK_THROWS_AS(m.Convert(testing::RandomMatrix(rng, 3, 4), UnitSpeaker(rng, 4), 1), ShapeError);
  CHECK_THROWS_AS(m.Convert(testing::RandomMatrix(rng, 3, 4), 2.0 * UnitSpeaker(rng, 3), 1),
                  PreconditionError);
  ConversionConfig bad = Micro();
  bad.location_kernel = 4;
  CHECK_THROWS_AS(ConversionModel(bad, 1), PreconditionError);
  nn::ParameterStore extra = m.params();
  extra.Add("cm.stop.w", Matrix::Zero(4, 1));
  CHECK_THROWS_AS(ConversionModel(Micro(), extra), FormatError);
}
