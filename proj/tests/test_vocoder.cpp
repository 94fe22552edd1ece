// test_vocoder.cpp

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
#include <numbers>

#include "clvc/vocoder.hpp"
#include "test_util.hpp"

using namespace clvc;

namespace {

FlowConfig Micro() {
  FlowConfig c;
  c.n_flows = 2;
  c.squeeze_group = 4;
  c.hidden = 5;
  c.kernel = 3;
  c.mel_dim = 3;
  c.hop_samples = 4;
  c.win_samples = 8;
  return c;
}

}  // namespace

TEST_CASE("identity initialization") {
  FlowConfig cfg = Micro();
  cfg.orthogonal_mix_init = false;
  FlowVocoder v(cfg, 1);
  Rng rng(2);
  Matrix x = testing::RandomMatrix(rng, 4, 4), c = testing::RandomMatrix(rng, 4, 3);
  auto lat = v.ForwardT<double>(x, c);
  CHECK(lat.z == x);
  CHECK(lat.log_det == 0.0);
  // Zero audio has z = 0, so the NLL is the Gaussian normalizer.
  FlowSegment seg{Matrix::Zero(4, 4), c};
  CHECK(VocLoss(v, std::span(&seg, 1)) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi)));
}

TEST_CASE("orthogonal mix initialization has unit |det| and is well conditioned") {
  FlowVocoder v(Micro(), 3);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(v.MixMatrix(k).determinant()) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(v.MixConditionNumber(k) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("log-determinant matches the dense numerical Jacobian") {
  for (std::uint64_t seed : {4, 5, 6}) {
    FlowVocoder v(Micro(), seed);
    testing::Perturb(&v, seed + 100);
    Rng rng(seed);
    Matrix x = testing::RandomMatrix(rng, 4, 4, 0.5), c = testing::RandomMatrix(rng, 4, 3);
    const double analytic = v.ForwardT<double>(x, c).log_det;
    const double numeric = testing::NumericLogDet(v, x, c);
    CHECK(numeric == doctest::Approx(analytic).epsilon(1e-6));
  }
}

TEST_CASE("inverse round trips in float and double") {
  FlowVocoder v(Micro(), 7);
  testing::Perturb(&v, 8);
  Rng rng(9);
  Matrix x = testing::RandomMatrix(rng, 25, 4, 0.3), c = testing::RandomMatrix(rng, 25, 3);
  Matrix back = v.InverseT<double>(v.ForwardT<double>(x, c).z, c);
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-12);
  MatrixT<float> xf = x.cast<float>(), cf = c.cast<float>();
  MatrixT<float> backf = v.InverseT<float>(v.ForwardT<float>(xf, cf).z, cf);
  CHECK((backf - xf).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("tape forward agrees with the templated forward") {
  FlowVocoder v(Micro(), 10);
  testing::Perturb(&v, 11);
  Rng rng(12);
  FlowSegment seg{testing::RandomMatrix(rng, 6, 4, 0.3), testing::RandomMatrix(rng, 6, 3)};
  ad::Tape tape(false);
  auto lat = v.Forward(tape, seg);
  auto ref = v.ForwardT<double>(seg.audio, seg.condition);
  CHECK((lat.z.value() - ref.z).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(lat.log_det.scalar() == doctest::Approx(ref.log_det).epsilon(1e-12));
}

TEST_CASE("flow NLL gradients match central differences") {
  FlowVocoder v(Micro(), 13);
  testing::Perturb(&v, 14, 0.1);
  Rng rng(15);
  FlowSegment seg{testing::RandomMatrix(rng, 5, 4, 0.3), testing::RandomMatrix(rng, 5, 3)};
  auto r = testing::CheckGradients(v.params(), [&](ad::Tape &t) { return FlowNll(t, v, seg, 0.7); }, 16);
  INFO(r.worst_parameter);
  CHECK(r.worst_relative < 1e-6);
}

TEST_CASE("ill-conditioned mixes are refused on inversion") {
  FlowVocoder v(Micro(), 16);
  v.params().Get("voc.f1.mix.log_s").value(0, 0) = -20.0;
  Matrix z = Matrix::Zero(2, 4), c = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(v.InverseT<double>(z, c), NumericError);
}

TEST_CASE("conditioning follows the nearest frame center and checks coverage") {
  FlowConfig cfg = FlowConfig::ForSampleRate(16000);
  CHECK(cfg.hop_samples == 160);
  CHECK(cfg.win_samples == 512);
  FlowVocoder v(cfg, 17);
  Matrix mel(3, 80);
  for (int t = 0; t < 3; ++t) mel.row(t).setConstant(t);
  // Rows of 8 samples; frame centers at 256, 416, 576.
  Matrix rows = v.ConditionRows(mel, 0, 90);
  CHECK(rows(0, 0) == 0.0);              // mid 4 -> clamps to frame 0
  CHECK(rows(41, 0) == 0.0);             // mid 332 -> 0.475 -> 0
  CHECK(rows(42, 0) == 1.0);             // mid 340 -> 0.525 -> 1
  CHECK(rows(89, 0) == 2.0);             // mid 716 -> 2.9 -> clamps to 2
  CHECK_THROWS_AS(v.ConditionRows(mel, 0, 200), ShapeError);
  CHECK_THROWS_AS(v.ConditionRows(Matrix::Zero(3, 7), 0, 1), ShapeError);
}

TEST_CASE("synthesis length and zero-sigma determinism") {
  FlowVocoder v(FlowConfig::ForSampleRate(16000), 18);
  MelSpectrogram mel;
  mel.values = Matrix::Constant(7, 80, -3.0);
  mel.sample_rate = 16000;
  AudioClip a = v.Synthesize(mel, 0.0, 1), b = v.Synthesize(mel, 0.0, 2);
  CHECK(a.samples.size() == 7 * 160 + 352);
  CHECK(a.samples == b.samples);
  CHECK(v.Synthesize(mel, 0.6, 3).samples == v.Synthesize(mel, 0.6, 3).samples);
  mel.sample_rate = 8000;
  CHECK_THROWS_AS(v.Synthesize(mel, 0.6, 3), PreconditionError);
}

TEST_CASE("Griffin-Lim: length law, silence floor and monotone convergence") {
  CHECK(SynthesisLength(10, 16000) == 10 * 160 + 352);
  CHECK(SynthesisLength(1, 24000) == 240 + 528);
  MelSpectrogram silent;
  silent.values = Matrix::Constant(20, 80, std::log(kFloorEps));
  silent.sample_rate = 16000;
  AudioClip s = GriffinLim(silent, {.iterations = 5});
  CHECK(s.samples.size() == SynthesisLength(20, 16000));
  double e = 0;
  for (float x : s.samples) e += double(x) * x;
  CHECK(std::sqrt(e / s.samples.size()) < 1e-3);

  Rng rng(19);
  AudioClip noise = testing::RandomClip(rng, 16000, 4000, 0.2);
  for (std::size_t i = 0; i < noise.samples.size(); ++i)
    noise.samples[i] += static_cast<float>(0.3 * std::sin(0.05 * i));
  GriffinLimResult r = GriffinLimTrace(ComputeMelSpectrogram(noise), {.iterations = 30});
  CHECK(r.convergence.size() == 30);
  for (std::size_t i = 1; i < r.convergence.size(); ++i)
    CHECK(r.convergence[i] <= r.convergence[i - 1] * (1 + 1e-9));
  CHECK(r.convergence.back() < r.convergence.front());
  CHECK_THROWS_AS(GriffinLim(silent, {.iterations = 0}), PreconditionError);
}

TEST_CASE("a few training steps reduce the NLL") {
  FlowConfig cfg = FlowConfig::ForSampleRate(16000);
  cfg.hidden = 16;
  cfg.n_flows = 2;
  FlowVocoder v(cfg, 20);
  AudioClip clip;
  clip.sample_rate = 16000;
  for (int i = 0; i < 4000; ++i) clip.samples.push_back(static_cast<float>(0.3 * std::sin(0.07 * i)));
  Matrix mel = ComputeMelSpectrogram(clip).values;
  nn::FitNormalizer(&v.params(), "voc.mel", mel);
  std::vector<FlowSegment> batch = {v.MakeSegment(clip, mel, 0, 1024), v.MakeSegment(clip, mel, 2048, 1024)};
  nn::Adam adam({.learning_rate = 0.003});
  const double first = VocLoss(v, batch);
  for (int i = 0; i < 30; ++i) VocTrainStep(&v, &adam, batch);
  CHECK(VocLoss(v, batch) < first - 0.3);
  CHECK_THROWS_AS(v.MakeSegment(clip, mel, 3, 16), ShapeError);
}
