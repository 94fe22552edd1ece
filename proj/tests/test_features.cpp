// test_features.cpp

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

#include "clvc/audio.hpp"
#include "clvc/features.hpp"
#include "test_util.hpp"

using namespace clvc;

TEST_CASE("framing constants at common rates") {
  CHECK(MsToSamples(16000, 32) == 512);
  CHECK(MsToSamples(16000, 10) == 160);
  CHECK(MsToSamples(24000, 32) == 768);
  CHECK(FftSizeFor(768) == 1024);
  CHECK(FftSizeFor(512) == 512);
  CHECK(NumFrames(511, 512, 160) == 0);
  CHECK(NumFrames(512, 512, 160) == 1);
  CHECK(NumFrames(512 + 159, 512, 160) == 1);
  CHECK(NumFrames(512 + 160, 512, 160) == 2);
}

TEST_CASE("Hann window is periodic") {
  RowVector w = HannWindow(8);
  CHECK(w(0) == 0.0);
  CHECK(w(4) == doctest::Approx(1.0));
  CHECK(w(2) == doctest::Approx(0.5));
  CHECK(w(6) == doctest::Approx(0.5));
}

TEST_CASE("power spectrum matches a direct DFT") {
  Rng rng(1);
  AudioClip clip = testing::RandomClip(rng, 16000, 1200);
  FrameMatrix f = FrameSignal(clip);
  Matrix p = PowerSpectrum(f, 512);
  for (Eigen::Index t = 0; t < f.frames.rows(); ++t) {
    std::vector<double> frame(f.frames.row(t).data(), f.frames.row(t).data() + f.frames.cols());
    std::vector<double> ref = testing::NaivePowerSpectrum(frame, 512);
    for (int k = 0; k < 257; ++k) CHECK(p(t, k) == doctest::Approx(ref[k]).epsilon(1e-9));
  }
}

TEST_CASE("mel filterbank rows are unit-peak triangles on the HTK scale") {
  Matrix fb = MelFilterbank(16000, 512);
  CHECK(fb.rows() == 80);
  CHECK(fb.cols() == 257);
  CHECK(HzToMel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(MelToHz(HzToMel(1234.5)) == doctest::Approx(1234.5));
  for (int m = 0; m < 80; ++m)
    for (int k = 0; k < 257; ++k)
      CHECK(fb(m, k) == doctest::Approx(testing::NaiveFilterWeight(16000, 512, 80, m, k)).epsilon(1e-9));
  CHECK(fb.maxCoeff() <= 1.0);
  CHECK(fb.minCoeff() >= 0.0);
  // The Nyquist bin sits on the upper corner of the last filter.
  CHECK(std::abs(fb(79, 256)) < 1e-12);
}

TEST_CASE("DCT basis is orthonormal") {
  Matrix full = DctBasis(80, 80);
  CHECK((full.transpose() * full - Matrix::Identity(80, 80)).cwiseAbs().maxCoeff() < 1e-12);
  // Constant log-mel maps to c0 only.
  Matrix lm = Matrix::Constant(1, 80, 2.0);
  Matrix c = MfccFromLogMel(lm, 40);
  CHECK(c(0, 0) == doctest::Approx(2.0 * std::sqrt(80.0)));
  CHECK(c.rightCols(39).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(MfccFromLogMel(lm, 81), ShapeError);
}

TEST_CASE("log-mel and MFCC match the naive front end") {
  Rng rng(2);
  for (int sr : {8000, 16000, 22050}) {
    AudioClip clip = testing::RandomClip(rng, sr, static_cast<std::size_t>(sr / 10));
    testing::NaiveFeatures ref = testing::NaiveFrontEnd(clip);
    FrontEndFeatures fe = ComputeFrontEnd(clip);
    REQUIRE(fe.log_mel.rows() == static_cast<Eigen::Index>(ref.log_mel.size()));
    for (Eigen::Index t = 0; t < fe.log_mel.rows(); ++t) {
      for (int m = 0; m < 80; ++m) CHECK(fe.log_mel(t, m) == doctest::Approx(ref.log_mel[t][m]).epsilon(1e-9));
      Matrix mfcc = MfccFromLogMel(fe.log_mel);
      for (int q = 0; q < 40; ++q)
        CHECK(mfcc(t, q) == doctest::Approx(ref.mfcc[t][q]).epsilon(1e-9).scale(1.0));
    }
    CHECK(ComputeMelSpectrogram(clip).values.isApprox(fe.log_mel, 1e-12));
  }
}

TEST_CASE("silence hits the log floor") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(2000, 0.0f);
  MelSpectrogram mel = ComputeMelSpectrogram(clip);
  CHECK(mel.values.maxCoeff() == doctest::Approx(std::log(kFloorEps)));
}

TEST_CASE("context stacking replicates edges") {
  Matrix f(4, 2);
  f << 0, 10, 1, 11, 2, 12, 3, 13;
  Matrix s = StackContext(f, 2, 1);
  REQUIRE(s.cols() == 8);
  // Row 0: frames -2,-1,0,1 -> 0,0,0,1.
  CHECK(s(0, 0) == 0);
  CHECK(s(0, 2) == 0);
  CHECK(s(0, 4) == 0);
  CHECK(s(0, 6) == 1);
  CHECK(s(0, 7) == 11);
  // Row 3: frames 1,2,3,4 -> 1,2,3,3.
  CHECK(s(3, 0) == 1);
  CHECK(s(3, 6) == 3);
  CHECK(s(3, 7) == 13);
  CHECK(StackContext(Matrix::Zero(3, 40)).cols() == 600);
  CHECK_THROWS_AS(StackContext(Matrix::Zero(0, 40)), PreconditionError);
}

TEST_CASE("prosody: log energy and zero-crossing rate") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(512);
  for (std::size_t i = 0; i < 512; ++i) clip.samples[i] = (i % 2 == 0) ? 0.5f : -0.5f;
  FrameMatrix raw = FrameSignal(clip, false);
  Matrix p = ComputeProsody(raw);
  CHECK(p(0, 0) == doctest::Approx(std::log(512 * 0.25)));
  CHECK(p(0, 1) == doctest::Approx(1.0));
  std::fill(clip.samples.begin(), clip.samples.end(), 0.0f);
  p = ComputeProsody(FrameSignal(clip, false));
  CHECK(p(0, 0) == doctest::Approx(std::log(kFloorEps)));
  CHECK(p(0, 1) == 0.0);  // zero counts as positive
}

TEST_CASE("front end streams share one frame count") {
  Rng rng(4);
  AudioClip clip = testing::RandomClip(rng, 16000, 5000);
  FrontEndFeatures fe = ComputeFrontEnd(clip);
  const Eigen::Index t = NumFrames(5000, 512, 160);
  CHECK(fe.log_mel.rows() == t);
  CHECK(fe.context_mfcc.rows() == t);
  CHECK(fe.prosody.rows() == t);
  CHECK(fe.context_mfcc.cols() == kContextMfccDim);
  AudioClip shorty = testing::RandomClip(rng, 16000, 100);
  CHECK_THROWS_AS(ComputeFrontEnd(shorty), PreconditionError);
}

TEST_CASE("trim removes quiet edges and keeps the interior") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(16000, 0.0f);
  for (std::size_t i = 4000; i < 12000; ++i) clip.samples[i] = (i % 40 < 20) ? 0.5f : -0.5f;
  AudioClip t = TrimSilence(clip);
  CHECK(t.samples.size() == 8000);
  CHECK(t.samples.front() == clip.samples[4000]);
  AudioClip silent = clip;
  std::fill(silent.samples.begin(), silent.samples.end(), 0.0f);
  CHECK_THROWS_AS(TrimSilence(silent), PreconditionError);
}

TEST_CASE("trim matches a brute-force scan on random envelopes") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    AudioClip clip;
    clip.sample_rate = 16000;
    const std::size_t n = 8000 + UniformIndex(rng, 8000);
    clip.samples.resize(n);
    const std::size_t a = UniformIndex(rng, n / 3), b = n - UniformIndex(rng, n / 3);
    for (std::size_t i = 0; i < n; ++i)
      clip.samples[i] = static_cast<float>((i >= a && i < b ? 0.3 : 1e-4) * StandardNormal(rng));
    // Brute force with the same scan framing: 25 ms blocks from sample 0.
    const std::size_t frame = 400;
    const std::size_t blocks = (n + frame - 1) / frame;
    std::vector<double> rms(blocks);
    double peak = 0;
    for (std::size_t k = 0; k < blocks; ++k) {
      double s = 0;
      std::size_t cnt = 0;
      for (std::size_t i = k * frame; i < std::min(n, (k + 1) * frame); ++i, ++cnt) s += double(clip.samples[i]) * clip.samples[i];
      rms[k] = std::sqrt(s / cnt);
      peak = std::max(peak, rms[k]);
    }
    const double thr = peak * std::pow(10.0, -40.0 / 20.0);
    std::size_t first = 0, last = blocks - 1;
    while (rms[first] < thr) ++first;
    while (rms[last] < thr) --last;
    const std::size_t lo = first * frame, hi = std::min(n, (last + 1) * frame);
    AudioClip t = TrimSilence(clip);
    REQUIRE(t.samples.size() == hi - lo);
    CHECK(t.samples.front() == clip.samples[lo]);
    CHECK(t.samples.back() == clip.samples[hi - 1]);
  }
}

TEST_CASE("WAV round trip is exact on the int16 grid") {
  const auto dir = testing::ScratchDir("wav");
  AudioClip clip;
  clip.sample_rate = 22050;
  for (int i = -5; i < 5; ++i) clip.samples.push_back(static_cast<float>(i * 1000) / 32768.0f);
  clip.samples.push_back(2.0f);  // clamps
  SaveWav(dir / "a.wav", clip);
  AudioClip back = LoadWav(dir / "a.wav");
  CHECK(back.sample_rate == 22050);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (std::size_t i = 0; i + 1 < clip.samples.size(); ++i) CHECK(back.samples[i] == clip.samples[i]);
  CHECK(back.samples.back() == doctest::Approx(32767.0 / 32768.0));
  SaveWav(dir / "b.wav", back);
  CHECK(LoadWav(dir / "b.wav").samples == back.samples);
  CHECK_THROWS(LoadWav(dir / "missing.wav"));
}
