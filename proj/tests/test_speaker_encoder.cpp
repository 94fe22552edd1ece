// test_speaker_encoder.cpp

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

#include <Eigen/QR>
#include <cmath>

#include "clvc/speaker_encoder.hpp"
#include "clvc/toy_corpus.hpp"
#include "test_util.hpp"

using namespace clvc;

namespace {

SpeakerEncoderConfig Micro() {
  SpeakerEncoderConfig c;
  c.mel_dim = 5;
  c.hidden = 4;
  c.num_layers = 2;
  c.embedding_dim = 3;
  c.min_frames = 4;
  return c;
}

Matrix RandomUnitRows(Rng &rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m = testing::RandomMatrix(rng, rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

}  // namespace

TEST_CASE("GE2E closed forms") {
  // Two speakers on orthogonal axes, two utterances each.
  Matrix e = Matrix::Zero(4, 3);
  e(0, 0) = e(1, 0) = 1.0;
  e(2, 1) = e(3, 1) = 1.0;
  const double expected = std::log1p(std::exp(-10.0));
  CHECK(Ge2eLossValue(e, 2, 2, 10.0, -5.0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(4.54e-5).epsilon(1e-3));
  // Indistinguishable speakers: every logit is equal.
  Matrix same = Matrix::Zero(12, 3);
  same.col(2).setOnes();
  CHECK(Ge2eLossValue(same, 4, 3, 10.0, -5.0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("GE2E is invariant to rotations of the embedding space") {
  Rng rng(1);
  Matrix e = RandomUnitRows(rng, 12, 5);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(testing::RandomMatrix(rng, 5, 5)));
  Matrix q = Eigen::MatrixXd(qr.householderQ());
  Matrix rotated = e * q;
  CHECK(Ge2eLossValue(rotated, 3, 4, 7.0, -2.0) ==
        doctest::Approx(Ge2eLossValue(e, 3, 4, 7.0, -2.0)).epsilon(1e-12));
}

TEST_CASE("GE2E rejects bad layouts") {
  Rng rng(2);
  Matrix e = RandomUnitRows(rng, 6, 3);
  CHECK_THROWS_AS(Ge2eLossValue(e, 4, 2, 10, -5), ShapeError);
  CHECK_THROWS_AS(Ge2eLossValue(e, 6, 1, 10, -5), PreconditionError);
  CHECK_THROWS_AS(Ge2eLossValue(2.0 * e, 3, 2, 10, -5), PreconditionError);
}

TEST_CASE("GE2E gradients with respect to embeddings, w and b") {
  Rng rng(3);
  nn::ParameterStore store;
  store.Add("e", testing::RandomMatrix(rng, 6, 4));
  store.Add("w", Matrix::Constant(1, 1, 3.0));
  store.Add("b", Matrix::Constant(1, 1, -1.0));
  auto r = testing::CheckGradients(store, [&](ad::Tape &t) {
    return Ge2eLoss(ad::L2NormalizeRows(t.Param(store.Get("e"))), 3, 2, t.Param(store.Get("w")),
                    t.Param(store.Get("b")));
  }, 24);
  INFO(r.worst_parameter);
  CHECK(r.worst_relative < 1e-7);
}

TEST_CASE("speaker encoder gradients match central differences") {
  SpeakerEncoder enc(Micro(), 4);
  Rng rng(5);
  std::vector<Matrix> windows;
  for (int i = 0; i < 4; ++i) windows.push_back(testing::RandomMatrix(rng, 6, 5));
  const nn::ParameterStore &p = enc.params();
  auto r = testing::CheckGradients(enc.params(), [&](ad::Tape &t) {
    return Ge2eLoss(enc.Forward(t, windows), 2, 2, t.Param(p.Get("se.ge2e.w")),
                    t.Param(p.Get("se.ge2e.b")));
  });
  INFO(r.worst_parameter);
  CHECK(r.worst_relative < 1e-6);
}

TEST_CASE("embeddings are unit norm; short windows are rejected") {
  SpeakerEncoder enc(Micro(), 6);
  Rng rng(7);
  RowVector e = enc.Embed(testing::RandomMatrix(rng, 9, 5));
  CHECK(e.norm() == doctest::Approx(1.0));
  CHECK_THROWS(enc.Embed(testing::RandomMatrix(rng, 3, 5)));
}

TEST_CASE("equal error rate") {
  const double sep[] = {0.9, 0.8, 0.1, 0.2};
  const bool lab[] = {true, true, false, false};
  CHECK(EqualErrorRate(sep, lab) == 0.0);
  const double inv[] = {0.1, 0.2, 0.9, 0.8};
  CHECK(EqualErrorRate(inv, lab) == doctest::Approx(1.0));
  // One impostor above one target: FAR = FRR = 1/2 at the crossing.
  const double mixed[] = {0.9, 0.3, 0.5, 0.1};
  CHECK(EqualErrorRate(mixed, lab) == doctest::Approx(0.5));
  const double one[] = {0.5};
  const bool only_true[] = {true};
  CHECK_THROWS_AS(EqualErrorRate(one, only_true), PreconditionError);
}

TEST_CASE("enrollment draws min(K, available) segments deterministically") {
  SpeakerEncoderConfig cfg = Micro();
  cfg.mel_dim = 80;
  SpeakerEncoder enc(cfg, 8);
  Rng rng(9);
  std::vector<AudioClip> clips = {testing::RandomClip(rng, 16000, 16000),
                                  testing::RandomClip(rng, 16000, 7000)};
  EnrollOptions opt{.num_segments = 5, .segment_seconds = 0.5};
  EnrollmentSet a = EnrollSpeaker("x", clips, enc, opt, 11);
  CHECK(a.segments.size() == 2);  // 2 + 0 whole segments
  CHECK(a.aggregate.norm() == doctest::Approx(1.0));
  opt.segment_seconds = 0.1;
  EnrollmentSet b = EnrollSpeaker("x", clips, enc, opt, 11);
  EnrollmentSet c = EnrollSpeaker("x", clips, enc, opt, 11);
  CHECK(b.segments.size() == 5);
  CHECK(b.aggregate == c.aggregate);
  for (const auto &s : b.segments)
    CHECK(s.offset + 1600 <= clips[s.clip].samples.size());
  opt.segment_seconds = 2.0;
  CHECK_THROWS_AS(EnrollSpeaker("x", clips, enc, opt, 11), PreconditionError);
}

TEST_CASE("toy speakers separate after a short GE2E run") {
  ToyCorpusOptions topt;
  ToyCorpus corpus(topt);
  SpeakerEncoderConfig cfg;
  cfg.hidden = 32;
  cfg.num_layers = 1;
  cfg.embedding_dim = 16;
  cfg.min_frames = 30;
  SpeakerEncoder enc(cfg, 12);
  std::vector<std::vector<Matrix>> mels(4);
  Matrix all(0, 80);
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 3; ++i) {
      Matrix m = ComputeMelSpectrogram(corpus.Random(s, 0.5, MixSeed(s, i)).audio).values;
      Matrix next(all.rows() + m.rows(), 80);
      next << all, m;
      all = next;
      mels[s].push_back(m.topRows(30));
    }
  nn::FitNormalizer(&enc.params(), "se.input", all);
  std::vector<Matrix> windows;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 3; ++i) windows.push_back(mels[s][i]);
  nn::Adam adam({.learning_rate = 0.01});
  const double first = SeTrainStep(&enc, &adam, windows, 4, 3);
  double last = first;
  for (int step = 0; step < 40; ++step) last = SeTrainStep(&enc, &adam, windows, 4, 3);
  CHECK(last < 0.2 * first);
}
