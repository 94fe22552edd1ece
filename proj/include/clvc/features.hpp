// clvc/features.hpp

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

// Deterministic DSP front-end. Every stream is framed identically (32 ms
// Hann window, 10 ms hop, no padding), so all per-frame features of a clip
// share the same frame count.

#ifndef CLVC_FEATURES_HPP_
#define CLVC_FEATURES_HPP_

#include <complex>
#include <memory>
#include <vector>

#include "clvc/audio.hpp"
#include "clvc/common.hpp"

namespace clvc {

inline constexpr double kFloorEps = 1e-10;
inline constexpr int kNumMels = 80;
inline constexpr int kNumMfcc = 40;
inline constexpr int kContextFrames = 7;
inline constexpr int kContextMfccDim = (2 * kContextFrames + 1) * kNumMfcc;  // 600
inline constexpr int kProsodyDim = 2;

struct FrameOptions {
  double win_ms = 32.0;
  double hop_ms = 10.0;
};

int MsToSamples(int sample_rate, double ms);
// 1 + floor((len - win) / hop) for len >= win, otherwise 0.
Eigen::Index NumFrames(std::size_t num_samples, int win, int hop);
// Smallest power of two >= win.
int FftSizeFor(int win);
// Periodic Hann window of length n.
RowVector HannWindow(int n);

struct FrameMatrix {
  Matrix frames;  // T x win
  int win_samples = 0;
  int hop_samples = 0;
};

// Frame t starts at sample t * hop. Throws if the clip is shorter than one
// window. With apply_window == false rows are raw signal slices.
FrameMatrix FrameSignal(const AudioClip &clip, bool apply_window = true,
                        const FrameOptions &options = {});

// Real FFT of a fixed size (FFTW-backed).
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  int size() const { return n_; }
  // `in` has at most n samples (zero padded); `out` receives n/2 + 1 bins.
  void Forward(const double *in, int count, std::complex<double> *out);
  // Unnormalized inverse: out[k] = sum_j in[j] e^{+2 pi i jk/n}; n samples.
  void Inverse(const std::complex<double> *in, double *out);

 private:
  struct Impl;
  int n_;
  std::unique_ptr<Impl> impl_;
};

// |FFT|^2 of every row, zero padded to nfft. T x (nfft/2 + 1).
Matrix PowerSpectrum(const FrameMatrix &frames, int nfft);

double HzToMel(double hz);
double MelToHz(double mel);
// Triangular filters on the HTK mel scale from 0 Hz to Nyquist, unit peak.
// num_mels x (nfft/2 + 1).
Matrix MelFilterbank(int sample_rate, int nfft, int num_mels = kNumMels);
// Center frequency (Hz) of filter m.
double MelCenterHz(int sample_rate, int m, int num_mels = kNumMels);

struct MelSpectrogram {
  Matrix values;  // T x 80, natural log of mel energies, floored at ln(kFloorEps)
  int sample_rate = 0;
  double win_ms = 32.0;
  double hop_ms = 10.0;

  Eigen::Index frames() const { return values.rows(); }
};

MelSpectrogram ComputeMelSpectrogram(const AudioClip &clip, const FrameOptions &options = {});

// Orthonormal DCT-II basis restricted to the first num_out coefficients:
// num_in x num_out, so coefficients = log_mel * basis.
Matrix DctBasis(int num_in, int num_out);
Matrix MfccFromLogMel(const Matrix &log_mel, int num_ceps = kNumMfcc);
Matrix ComputeMfcc(const AudioClip &clip, const FrameOptions &options = {});

// Row t is rows max(0, t-left) .. min(T-1, t+right) with edge replication,
// concatenated in time order: T x ((left + right + 1) * D).
Matrix StackContext(const Matrix &features, int left = kContextFrames,
                    int right = kContextFrames);

// Column 0: ln(max(sum x^2, eps)); column 1: sign changes / (W - 1), zero
// counted as positive. Expects unwindowed frames.
Matrix ComputeProsody(const FrameMatrix &raw_frames);

// Everything derived from one clip with a single framing pass.
struct FrontEndFeatures {
  Matrix log_mel;       // T x 80
  Matrix context_mfcc;  // T x 600
  Matrix prosody;       // T x 2
};

FrontEndFeatures ComputeFrontEnd(const AudioClip &clip, const FrameOptions &options = {});

}  // namespace clvc

#endif  // CLVC_FEATURES_HPP_
