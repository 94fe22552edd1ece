// features.cpp

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

#include "clvc/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace clvc {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW planning is not thread safe; execution with separate buffers is.
std::mutex &FftwPlannerMutex() {
  static std::mutex m;
  return m;
}

}  // namespace

int MsToSamples(int sample_rate, double ms) {
  return static_cast<int>(std::lround(sample_rate * ms / 1000.0));
}

Eigen::Index NumFrames(std::size_t num_samples, int win, int hop) {
  if (win <= 0 || hop <= 0) throw PreconditionError("window and hop must be positive");
  if (num_samples < static_cast<std::size_t>(win)) return 0;
  return 1 + static_cast<Eigen::Index>((num_samples - static_cast<std::size_t>(win)) /
                                       static_cast<std::size_t>(hop));
}

int FftSizeFor(int win) {
  int n = 1;
  while (n < win) n <<= 1;
  return n;
}

RowVector HannWindow(int n) {
  RowVector w(n);
  for (int i = 0; i < n; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

FrameMatrix FrameSignal(const AudioClip &clip, bool apply_window, const FrameOptions &options) {
  ValidateClip(clip);
  FrameMatrix fm;
  fm.win_samples = MsToSamples(clip.sample_rate, options.win_ms);
  fm.hop_samples = MsToSamples(clip.sample_rate, options.hop_ms);
  const Eigen::Index t = NumFrames(clip.samples.size(), fm.win_samples, fm.hop_samples);
  if (t == 0)
    throw PreconditionError("clip shorter than one analysis window (" +
                            std::to_string(clip.samples.size()) + " < " +
                            std::to_string(fm.win_samples) + " samples)");
  fm.frames.resize(t, fm.win_samples);
  const RowVector window = HannWindow(fm.win_samples);
  for (Eigen::Index r = 0; r < t; ++r) {
    const std::size_t start = static_cast<std::size_t>(r) * fm.hop_samples;
    for (int i = 0; i < fm.win_samples; ++i) {
      double v = clip.samples[start + static_cast<std::size_t>(i)];
      fm.frames(r, i) = apply_window ? v * window(i) : v;
    }
  }
  return fm;
}

struct RealFft::Impl {
  double *real = nullptr;
  fftw_complex *spec = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

RealFft::RealFft(int n) : n_(n), impl_(std::make_unique<Impl>()) {
  if (n <= 0) throw PreconditionError("FFT size must be positive");
  impl_->real = fftw_alloc_real(static_cast<std::size_t>(n));
  impl_->spec = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  std::lock_guard<std::mutex> lock(FftwPlannerMutex());
  impl_->forward = fftw_plan_dft_r2c_1d(n, impl_->real, impl_->spec, FFTW_ESTIMATE);
  impl_->inverse = fftw_plan_dft_c2r_1d(n, impl_->spec, impl_->real, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(FftwPlannerMutex());
  fftw_destroy_plan(impl_->forward);
  fftw_destroy_plan(impl_->inverse);
  fftw_free(impl_->real);
  fftw_free(impl_->spec);
}

void RealFft::Forward(const double *in, int count, std::complex<double> *out) {
  if (count > n_) throw PreconditionError("RealFft: input longer than transform");
  std::copy(in, in + count, impl_->real);
  std::fill(impl_->real + count, impl_->real + n_, 0.0);
  fftw_execute(impl_->forward);
  for (int k = 0; k <= n_ / 2; ++k) out[k] = {impl_->spec[k][0], impl_->spec[k][1]};
}

void RealFft::Inverse(const std::complex<double> *in, double *out) {
  for (int k = 0; k <= n_ / 2; ++k) {
    impl_->spec[k][0] = in[k].real();
    impl_->spec[k][1] = in[k].imag();
  }
  fftw_execute(impl_->inverse);
  std::copy(impl_->real, impl_->real + n_, out);
}

Matrix PowerSpectrum(const FrameMatrix &frames, int nfft) {
  RealFft fft(nfft);
  const int bins = nfft / 2 + 1;
  Matrix power(frames.frames.rows(), bins);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins));
  for (Eigen::Index t = 0; t < frames.frames.rows(); ++t) {
    fft.Forward(frames.frames.row(t).data(), static_cast<int>(frames.frames.cols()), spec.data());
    for (int k = 0; k < bins; ++k) power(t, k) = std::norm(spec[static_cast<std::size_t>(k)]);
  }
  return power;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double MelCenterHz(int sample_rate, int m, int num_mels) {
  const double top = HzToMel(sample_rate / 2.0);
  return MelToHz(top * (m + 1) / (num_mels + 1));
}

Matrix MelFilterbank(int sample_rate, int nfft, int num_mels) {
  const int bins = nfft / 2 + 1;
  const double top = HzToMel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(num_mels + 2));
  for (int i = 0; i < num_mels + 2; ++i) edges[i] = MelToHz(top * i / (num_mels + 1));
  Matrix fb = Matrix::Zero(num_mels, bins);
  for (int m = 0; m < num_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      if (f > lo && f < hi) fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

namespace {

Matrix LogMelFromPower(const Matrix &power, const Matrix &filterbank) {
  Matrix mel = power * filterbank.transpose();
  return mel.unaryExpr([](double v) { return std::log(std::max(v, kFloorEps)); });
}

}  // namespace

MelSpectrogram ComputeMelSpectrogram(const AudioClip &clip, const FrameOptions &options) {
  FrameMatrix frames = FrameSignal(clip, true, options);
  const int nfft = FftSizeFor(frames.win_samples);
  MelSpectrogram mel;
  mel.values = LogMelFromPower(PowerSpectrum(frames, nfft),
                               MelFilterbank(clip.sample_rate, nfft, kNumMels));
  mel.sample_rate = clip.sample_rate;
  mel.win_ms = options.win_ms;
  mel.hop_ms = options.hop_ms;
  return mel;
}

Matrix DctBasis(int num_in, int num_out) {
  Matrix basis(num_in, num_out);
  for (int k = 0; k < num_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / num_in) : std::sqrt(2.0 / num_in);
    for (int n = 0; n < num_in; ++n)
      basis(n, k) = scale * std::cos(kPi * k * (2.0 * n + 1.0) / (2.0 * num_in));
  }
  return basis;
}

Matrix MfccFromLogMel(const Matrix &log_mel, int num_ceps) {
  if (num_ceps > log_mel.cols()) throw ShapeError("more cepstra requested than mel channels");
  return log_mel * DctBasis(static_cast<int>(log_mel.cols()), num_ceps);
}

Matrix ComputeMfcc(const AudioClip &clip, const FrameOptions &options) {
  return MfccFromLogMel(ComputeMelSpectrogram(clip, options).values, kNumMfcc);
}

Matrix StackContext(const Matrix &features, int left, int right) {
  const Eigen::Index t = features.rows(), d = features.cols();
  if (t < 1) throw PreconditionError("StackContext: empty input");
  if (left < 0 || right < 0) throw PreconditionError("StackContext: negative context");
  const int width = left + right + 1;
  Matrix out(t, width * d);
  for (Eigen::Index r = 0; r < t; ++r)
    for (int k = 0; k < width; ++k) {
      Eigen::Index src = std::clamp<Eigen::Index>(r + k - left, 0, t - 1);
      out.block(r, k * d, 1, d) = features.row(src);
    }
  return out;
}

Matrix ComputeProsody(const FrameMatrix &raw_frames) {
  const Matrix &f = raw_frames.frames;
  Matrix out(f.rows(), kProsodyDim);
  const Eigen::Index w = f.cols();
  for (Eigen::Index t = 0; t < f.rows(); ++t) {
    out(t, 0) = std::log(std::max(f.row(t).squaredNorm(), kFloorEps));
    int changes = 0;
    for (Eigen::Index i = 1; i < w; ++i) {
      const bool prev = f(t, i - 1) >= 0.0, cur = f(t, i) >= 0.0;
      if (prev != cur) ++changes;
    }
    out(t, 1) = w > 1 ? static_cast<double>(changes) / static_cast<double>(w - 1) : 0.0;
  }
  return out;
}

FrontEndFeatures ComputeFrontEnd(const AudioClip &clip, const FrameOptions &options) {
  FrameMatrix raw = FrameSignal(clip, false, options);
  FrameMatrix windowed = raw;
  const RowVector window = HannWindow(raw.win_samples);
  windowed.frames.array().rowwise() *= window.array();
  const int nfft = FftSizeFor(raw.win_samples);

  FrontEndFeatures out;
  out.log_mel = LogMelFromPower(PowerSpectrum(windowed, nfft),
                                MelFilterbank(clip.sample_rate, nfft, kNumMels));
  out.context_mfcc = StackContext(MfccFromLogMel(out.log_mel, kNumMfcc));
  out.prosody = ComputeProsody(raw);
  return out;
}

}  // namespace clvc
