// vocoder.cpp

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

#include "clvc/vocoder.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace clvc {

// ---- Griffin-Lim

std::size_t SynthesisLength(Eigen::Index frames, int sample_rate, double win_ms, double hop_ms) {
  if (frames < 1) throw ShapeError("mel spectrogram has no frames");
  const int win = MsToSamples(sample_rate, win_ms), hop = MsToSamples(sample_rate, hop_ms);
  return static_cast<std::size_t>(frames) * static_cast<std::size_t>(hop) +
         static_cast<std::size_t>(win - hop);
}

namespace {

using Spectrum = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>;

struct Stft {
  int win, hop, nfft;
  RowVector window;
  RealFft fft;

  Stft(int win_, int hop_) : win(win_), hop(hop_), nfft(FftSizeFor(win_)),
                             window(HannWindow(win_)), fft(nfft) {}

  Spectrum Forward(const std::vector<double> &x, Eigen::Index frames) {
    Spectrum out(frames, nfft / 2 + 1);
    std::vector<double> buf(static_cast<std::size_t>(win));
    for (Eigen::Index t = 0; t < frames; ++t) {
      const std::size_t start = static_cast<std::size_t>(t * hop);
      for (int i = 0; i < win; ++i) buf[static_cast<std::size_t>(i)] = x[start + i] * window(i);
      fft.Forward(buf.data(), win, &out(t, 0));
    }
    return out;
  }

  // Least-squares signal whose STFT is closest to `spec`. Samples whose
  // window energy is below `floor` times the peak are damped instead.
  std::vector<double> Inverse(const Spectrum &spec, double floor = 0.0) {
    const Eigen::Index frames = spec.rows();
    const std::size_t len = static_cast<std::size_t>((frames - 1) * hop + win);
    std::vector<double> num(len, 0.0), den(len, 0.0), buf(static_cast<std::size_t>(nfft));
    for (Eigen::Index t = 0; t < frames; ++t) {
      fft.Inverse(&spec(t, 0), buf.data());
      const std::size_t start = static_cast<std::size_t>(t * hop);
      for (int i = 0; i < win; ++i) {
        num[start + i] += window(i) * buf[static_cast<std::size_t>(i)] / nfft;
        den[start + i] += window(i) * window(i);
      }
    }
    const double lo = std::max(1e-12, floor * *std::max_element(den.begin(), den.end()));
    for (std::size_t n = 0; n < len; ++n) num[n] = den[n] > 1e-12 ? num[n] / std::max(den[n], lo) : 0.0;
    return num;
  }
};

// Squared norm of the full two-sided spectrum represented by rfft bins.
double FullSpectrumNorm2(const Spectrum &s) {
  const Eigen::Index last = s.cols() - 1;
  double total = 0.0;
  for (Eigen::Index t = 0; t < s.rows(); ++t)
    for (Eigen::Index k = 0; k <= last; ++k)
      total += (k == 0 || k == last ? 1.0 : 2.0) * std::norm(s(t, k));
  return total;
}

}  // namespace

GriffinLimResult GriffinLimTrace(const MelSpectrogram &mel, const GriffinLimOptions &options) {
  if (mel.values.cols() != kNumMels) throw ShapeError("Griffin-Lim expects 80 mel channels");
  if (mel.frames() < 1) throw ShapeError("mel spectrogram has no frames");
  if (mel.sample_rate <= 0) throw PreconditionError("mel spectrogram has no sample rate");
  if (options.iterations < 1) throw PreconditionError("Griffin-Lim needs at least one iteration");

  Stft stft(MsToSamples(mel.sample_rate, mel.win_ms), MsToSamples(mel.sample_rate, mel.hop_ms));
  const Matrix fb = MelFilterbank(mel.sample_rate, stft.nfft, kNumMels);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(fb.rows(), fb.cols());
  cod.setThreshold(1e-4);  // drops near-duplicate low-frequency filters
  cod.compute(fb);
  const Matrix pinv = cod.pseudoInverse();  // bins x 80
  const Matrix power = (mel.values.array().exp().matrix() * pinv.transpose()).cwiseMax(0.0);
  const Matrix magnitude = power.cwiseSqrt();

  Spectrum target = magnitude.cast<std::complex<double>>();
  const double scale = std::sqrt(FullSpectrumNorm2(target));
  GriffinLimResult result;
  std::vector<double> x;
  for (int it = 0; it < options.iterations; ++it) {
    x = stft.Inverse(target);
    Spectrum rebuilt = stft.Forward(x, mel.frames());
    result.convergence.push_back(
        scale > 0.0 ? std::sqrt(FullSpectrumNorm2(target - rebuilt)) / scale : 0.0);
    for (Eigen::Index i = 0; i < rebuilt.size(); ++i) {
      const double mag = std::abs(rebuilt.data()[i]);
      target.data()[i] = mag > 0.0 ? magnitude.data()[i] * rebuilt.data()[i] / mag
                                   : std::complex<double>(magnitude.data()[i], 0.0);
    }
  }
  x = stft.Inverse(target, 1e-2);
  result.audio.sample_rate = mel.sample_rate;
  result.audio.samples.assign(x.begin(), x.end());
  return result;
}

AudioClip GriffinLim(const MelSpectrogram &mel, const GriffinLimOptions &options) {
  return GriffinLimTrace(mel, options).audio;
}

// ---- flow

void FlowConfig::Validate() const {
  if (n_flows < 1) throw PreconditionError("n_flows must be >= 1");
  if (squeeze_group < 2 || squeeze_group % 2 != 0)
    throw PreconditionError("squeeze_group must be even and >= 2");
  if (hidden < 1) throw PreconditionError("coupling width must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw PreconditionError("coupling kernel must be odd");
  if (mel_dim < 1 || hop_samples < 1 || win_samples < hop_samples)
    throw PreconditionError("bad mel framing in flow config");
  if (!(train_sigma > 0.0) || !(synth_sigma >= 0.0)) throw PreconditionError("bad sigma");
}

FlowConfig FlowConfig::ForSampleRate(int sample_rate) {
  FlowConfig c;
  c.hop_samples = MsToSamples(sample_rate, 10.0);
  c.win_samples = MsToSamples(sample_rate, 32.0);
  return c;
}

std::string FlowVocoder::FlowName(int flow) { return "voc.f" + std::to_string(flow); }

FlowVocoder::FlowVocoder(const FlowConfig &config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng(seed);
  const int g = config_.squeeze_group, half = g / 2;
  nn::AddNormalizer(&params_, "voc.mel", config_.mel_dim);
  for (int k = 0; k < config_.n_flows; ++k) {
    const std::string name = FlowName(k);
    Matrix p = Matrix::Identity(g, g), l = Matrix::Zero(g, g), u = Matrix::Zero(g, g);
    Matrix sign = Matrix::Ones(1, g), log_s = Matrix::Zero(1, g);
    if (config_.orthogonal_mix_init) {
      Eigen::MatrixXd gauss(g, g);
      for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = StandardNormal(rng);
      Eigen::MatrixXd q = gauss.householderQr().householderQ();
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(q);
      const Eigen::MatrixXd packed = lu.matrixLU();
      p = Eigen::MatrixXd(lu.permutationP().transpose());
      l = packed.triangularView<Eigen::StrictlyLower>();
      u = packed.triangularView<Eigen::StrictlyUpper>();
      for (int i = 0; i < g; ++i) {
        sign(0, i) = packed(i, i) < 0.0 ? -1.0 : 1.0;
        log_s(0, i) = std::log(std::abs(packed(i, i)));
      }
    }
    params_.Add(name + ".mix.p", p, false);
    params_.Add(name + ".mix.sign", sign, false);
    params_.Add(name + ".mix.l", l);
    params_.Add(name + ".mix.u", u);
    params_.Add(name + ".mix.log_s", log_s);
    nn::AddLinear(&params_, name + ".cpl.in", config_.kernel * (half + config_.mel_dim),
                  config_.hidden, rng);
    nn::AddLinear(&params_, name + ".cpl.out", config_.hidden, g, rng, /*zero_init=*/true);
  }
}

FlowVocoder::FlowVocoder(const FlowConfig &config, nn::ParameterStore params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
  FlowConfig probe = config_;
  probe.orthogonal_mix_init = false;
  FlowVocoder reference(probe, 0);
  for (const auto &[name, p] : reference.params().items()) {
    if (!params_.Contains(name)) throw FormatError("vocoder parameters lack '" + name + "'");
    ad::Parameter &mine = params_.Get(name);
    if (mine.value.rows() != p.value.rows() || mine.value.cols() != p.value.cols())
      throw ShapeError("vocoder parameter '" + name + "' has the wrong shape");
    mine.trainable = p.trainable;
  }
  for (const auto &[name, p] : params_.items())
    if (!reference.params().Contains(name))
      throw FormatError("unexpected vocoder parameter '" + name + "'");
}

Matrix FlowVocoder::Squeeze(std::span<const double> samples) const {
  const std::size_t g = static_cast<std::size_t>(config_.squeeze_group);
  if (samples.empty() || samples.size() % g != 0)
    throw ShapeError("segment length " + std::to_string(samples.size()) +
                     " is not a positive multiple of squeeze_group " + std::to_string(g));
  Matrix rows(static_cast<Eigen::Index>(samples.size() / g), static_cast<Eigen::Index>(g));
  std::copy(samples.begin(), samples.end(), rows.data());
  return rows;
}

std::vector<double> FlowVocoder::Unsqueeze(const Matrix &rows) {
  return std::vector<double>(rows.data(), rows.data() + rows.size());
}

Matrix FlowVocoder::ConditionRows(const Matrix &log_mel, Eigen::Index first_row,
                                  Eigen::Index rows) const {
  if (log_mel.cols() != config_.mel_dim)
    throw ShapeError("vocoder expects " + std::to_string(config_.mel_dim) + " mel channels");
  const Eigen::Index frames = log_mel.rows();
  const Eigen::Index g = config_.squeeze_group, hop = config_.hop_samples;
  if (frames < 1 || rows < 1 || first_row < 0) throw ShapeError("empty vocoder condition");
  const Eigen::Index last_sample = (first_row + rows) * g - 1;
  if (last_sample >= (frames - 1) * hop + config_.win_samples + g)
    throw ShapeError("mel frames (" + std::to_string(frames) + ") do not cover sample " +
                     std::to_string(last_sample));
  Matrix out(rows, config_.mel_dim);
  const double center0 = config_.win_samples / 2.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mid = static_cast<double>((first_row + r) * g) + g / 2.0;
    const auto t = static_cast<Eigen::Index>(std::lround((mid - center0) / hop));
    out.row(r) = log_mel.row(std::clamp<Eigen::Index>(t, 0, frames - 1));
  }
  return nn::ApplyNormalizer(params_, "voc.mel", out);
}

FlowSegment FlowVocoder::MakeSegment(const AudioClip &clip, const Matrix &log_mel,
                                     std::size_t offset, std::size_t length) const {
  const std::size_t g = static_cast<std::size_t>(config_.squeeze_group);
  if (offset % g != 0) throw ShapeError("segment offset must be a multiple of squeeze_group");
  if (offset + length > clip.samples.size()) throw ShapeError("segment runs past the clip");
  std::vector<double> cut(clip.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                          clip.samples.begin() + static_cast<std::ptrdiff_t>(offset + length));
  FlowSegment s;
  s.audio = Squeeze(cut);
  s.condition = ConditionRows(log_mel, static_cast<Eigen::Index>(offset / g), s.audio.rows());
  return s;
}

namespace {

Matrix StrictMask(int g, bool lower) {
  Matrix m = Matrix::Zero(g, g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) m(i, j) = (lower ? i > j : i < j) ? 1.0 : 0.0;
  return m;
}

}  // namespace

FlowVocoder::Latent FlowVocoder::Forward(ad::Tape &tape, const FlowSegment &segment) const {
  const int g = config_.squeeze_group, half = g / 2;
  if (segment.audio.cols() != g) throw ShapeError("segment rows must have squeeze_group samples");
  if (segment.condition.rows() != segment.audio.rows() ||
      segment.condition.cols() != config_.mel_dim)
    throw ShapeError("segment condition does not match its audio rows");
  const Eigen::Index rows = segment.audio.rows();
  const ad::Var lower_mask = tape.Constant(StrictMask(g, true));
  const ad::Var upper_mask = tape.Constant(StrictMask(g, false));
  const ad::Var eye = tape.Constant(Matrix::Identity(g, g));
  const ad::Var cond = tape.Constant(segment.condition);

  ad::Var x = tape.Constant(segment.audio);
  ad::Var log_det;
  for (int k = 0; k < config_.n_flows; ++k) {
    const std::string name = FlowName(k);
    ad::Var log_s = tape.Param(params_.Get(name + ".mix.log_s"));
    Matrix sign_diag = params_.Get(name + ".mix.sign").value.row(0).asDiagonal();
    ad::Var l = ad::Add(ad::Mul(tape.Param(params_.Get(name + ".mix.l")), lower_mask), eye);
    ad::Var u = ad::Add(ad::Mul(tape.Param(params_.Get(name + ".mix.u")), upper_mask),
                        ad::Mul(ad::BroadcastRows(ad::Exp(log_s), g),
                                tape.Constant(std::move(sign_diag))));
    ad::Var w = ad::MatMul(ad::MatMul(tape.Param(params_.Get(name + ".mix.p")), l), u);
    x = ad::MatMul(x, w);
    ad::Var mix_det = ad::Scale(ad::Sum(log_s), static_cast<double>(rows));

    ad::Var a = ad::SliceCols(x, 0, half), b = ad::SliceCols(x, half, half);
    ad::Var h = ad::Tanh(nn::Linear(tape, params_, name + ".cpl.in",
                                    ad::UnfoldRows(ad::ConcatCols({a, cond}), config_.kernel)));
    ad::Var st = nn::Linear(tape, params_, name + ".cpl.out", h);
    ad::Var s = ad::SliceCols(st, 0, half), t = ad::SliceCols(st, half, half);
    x = ad::ConcatCols({a, ad::Add(ad::Mul(b, ad::Exp(s)), t)});
    ad::Var flow_det = ad::Add(mix_det, ad::Sum(s));
    log_det = log_det.valid() ? ad::Add(log_det, flow_det) : flow_det;
  }
  return {x, log_det};
}

template <typename Scalar>
MatrixT<Scalar> FlowVocoder::CouplingNet(int flow, const MatrixT<Scalar> &a,
                                         const MatrixT<Scalar> &condition) const {
  const std::string name = FlowName(flow);
  const Eigen::Index rows = a.rows(), c = a.cols() + condition.cols(), half = config_.kernel / 2;
  MatrixT<Scalar> in(rows, c);
  in << a, condition;
  MatrixT<Scalar> unfolded = MatrixT<Scalar>::Zero(rows, config_.kernel * c);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (int k = 0; k < config_.kernel; ++k) {
      const Eigen::Index src = i + k - half;
      if (src >= 0 && src < rows) unfolded.block(i, k * c, 1, c) = in.row(src);
    }
  auto param = [&](const std::string &suffix) {
    return MatrixT<Scalar>(params_.Get(name + suffix).value.template cast<Scalar>());
  };
  MatrixT<Scalar> h = ((unfolded * param(".cpl.in.w")).rowwise() +
                       param(".cpl.in.b").row(0)).array().tanh().matrix();
  return (h * param(".cpl.out.w")).rowwise() + param(".cpl.out.b").row(0);
}

template <typename Scalar>
FlowVocoder::LatentT<Scalar> FlowVocoder::ForwardT(const MatrixT<Scalar> &audio,
                                                   const MatrixT<Scalar> &condition) const {
  const int g = config_.squeeze_group, half = g / 2;
  if (audio.cols() != g || condition.rows() != audio.rows() ||
      condition.cols() != config_.mel_dim)
    throw ShapeError("flow input shapes are inconsistent");
  LatentT<Scalar> out;
  out.z = audio;
  for (int k = 0; k < config_.n_flows; ++k) {
    const MatrixT<Scalar> w = MixMatrix(k).template cast<Scalar>();
    out.z = (out.z * w).eval();
    out.log_det += static_cast<Scalar>(audio.rows()) *
                   params_.Get(FlowName(k) + ".mix.log_s").value.template cast<Scalar>().sum();
    const MatrixT<Scalar> a = out.z.leftCols(half);
    const MatrixT<Scalar> st = CouplingNet<Scalar>(k, a, condition);
    out.z.rightCols(half) =
        (out.z.rightCols(half).array() * st.leftCols(half).array().exp() +
         st.rightCols(half).array()).matrix();
    out.log_det += st.leftCols(half).sum();
  }
  return out;
}

template <typename Scalar>
MatrixT<Scalar> FlowVocoder::InverseT(const MatrixT<Scalar> &z,
                                      const MatrixT<Scalar> &condition) const {
  const int g = config_.squeeze_group, half = g / 2;
  if (z.cols() != g || condition.rows() != z.rows() || condition.cols() != config_.mel_dim)
    throw ShapeError("flow input shapes are inconsistent");
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixT<Scalar> x = z;
  for (int k = config_.n_flows - 1; k >= 0; --k) {
    const double cond = MixConditionNumber(k);
    if (!(cond <= config_.max_condition))
      throw NumericError("channel mix of flow " + std::to_string(k) +
                         " is not safely invertible (condition number " + std::to_string(cond) +
                         ")");
    const MatrixT<Scalar> st = CouplingNet<Scalar>(k, x.leftCols(half), condition);
    x.rightCols(half) = ((x.rightCols(half) - st.rightCols(half)).array() *
                         (-st.leftCols(half).array()).exp()).matrix();

    const std::string name = FlowName(k);
    const Dense p = params_.Get(name + ".mix.p").value.template cast<Scalar>();
    const Dense l = params_.Get(name + ".mix.l").value.template cast<Scalar>();
    Dense u = params_.Get(name + ".mix.u").value.template cast<Scalar>();
    const RowVector sign = params_.Get(name + ".mix.sign").value.row(0);
    const RowVector log_s = params_.Get(name + ".mix.log_s").value.row(0);
    for (int i = 0; i < g; ++i) u(i, i) = static_cast<Scalar>(sign(i) * std::exp(log_s(i)));
    // x P L U = y, solved right to left on the transposed system.
    Dense v = x.transpose();
    v = u.transpose().template triangularView<Eigen::Lower>().solve(v);
    v = l.transpose().template triangularView<Eigen::UnitUpper>().solve(v);
    x = (v.transpose() * p.transpose()).eval();
  }
  return x;
}

template FlowVocoder::LatentT<float> FlowVocoder::ForwardT(const MatrixT<float> &,
                                                           const MatrixT<float> &) const;
template FlowVocoder::LatentT<double> FlowVocoder::ForwardT(const MatrixT<double> &,
                                                            const MatrixT<double> &) const;
template MatrixT<float> FlowVocoder::InverseT(const MatrixT<float> &,
                                              const MatrixT<float> &) const;
template MatrixT<double> FlowVocoder::InverseT(const MatrixT<double> &,
                                               const MatrixT<double> &) const;

Matrix FlowVocoder::MixMatrix(int flow) const {
  const std::string name = FlowName(flow);
  const int g = config_.squeeze_group;
  Matrix l = params_.Get(name + ".mix.l").value.triangularView<Eigen::StrictlyLower>();
  Matrix u = params_.Get(name + ".mix.u").value.triangularView<Eigen::StrictlyUpper>();
  l += Matrix::Identity(g, g);
  const RowVector sign = params_.Get(name + ".mix.sign").value.row(0);
  const RowVector log_s = params_.Get(name + ".mix.log_s").value.row(0);
  for (int i = 0; i < g; ++i) u(i, i) = sign(i) * std::exp(log_s(i));
  return params_.Get(name + ".mix.p").value * l * u;
}

double FlowVocoder::MixConditionNumber(int flow) const {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(MixMatrix(flow));
  const auto &s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

AudioClip FlowVocoder::Synthesize(const MelSpectrogram &mel, double sigma,
                                  std::uint64_t seed) const {
  if (!(sigma >= 0.0)) throw PreconditionError("sigma must be >= 0");
  if (MsToSamples(mel.sample_rate, mel.hop_ms) != config_.hop_samples ||
      MsToSamples(mel.sample_rate, mel.win_ms) != config_.win_samples)
    throw PreconditionError("mel framing at " + std::to_string(mel.sample_rate) +
                            " Hz does not match the vocoder configuration");
  const std::size_t length = SynthesisLength(mel.frames(), mel.sample_rate, mel.win_ms, mel.hop_ms);
  const std::size_t g = static_cast<std::size_t>(config_.squeeze_group);
  const auto rows = static_cast<Eigen::Index>((length + g - 1) / g);
  const Matrix cond = ConditionRows(mel.values, 0, rows);
  Matrix z(rows, config_.squeeze_group);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = sigma * StandardNormal(rng);
  if (sigma == 0.0) z.setZero();
  const Matrix x = InverseT<double>(z, cond);
  AudioClip clip;
  clip.sample_rate = mel.sample_rate;
  clip.samples.assign(x.data(), x.data() + length);
  return clip;
}

ad::Var FlowNll(ad::Tape &tape, const FlowVocoder &vocoder, const FlowSegment &segment,
                double sigma) {
  if (!(sigma > 0.0)) throw PreconditionError("likelihood needs sigma > 0");
  FlowVocoder::Latent lat = vocoder.Forward(tape, segment);
  const double n = static_cast<double>(lat.z.value().size());
  ad::Var quad = ad::Scale(ad::Sum(ad::Square(lat.z)), 0.5 / (sigma * sigma * n));
  ad::Var nll = ad::Sub(quad, ad::Scale(lat.log_det, 1.0 / n));
  return ad::AddConstant(nll, 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma));
}

namespace {

ad::Var BatchNll(ad::Tape &tape, const FlowVocoder &vocoder, std::span<const FlowSegment> batch) {
  if (batch.empty()) throw PreconditionError("empty training batch");
  ad::Var total;
  for (const auto &seg : batch) {
    ad::Var nll = ad::Scale(FlowNll(tape, vocoder, seg, vocoder.config().train_sigma),
                            1.0 / static_cast<double>(batch.size()));
    total = total.valid() ? ad::Add(total, nll) : nll;
  }
  return total;
}

}  // namespace

double VocTrainStep(FlowVocoder *vocoder, nn::Adam *optimizer,
                    std::span<const FlowSegment> batch) {
  ad::Tape tape;
  ad::Var loss = BatchNll(tape, *vocoder, batch);
  const double value = loss.scalar();
  if (!std::isfinite(value))
    throw NumericError("vocoder NLL is not finite (step " + std::to_string(optimizer->steps() + 1) +
                       ")");
  vocoder->params().ZeroGrad();
  tape.Backward(loss);
  optimizer->Step(&vocoder->params());
  return value;
}

double VocLoss(const FlowVocoder &vocoder, std::span<const FlowSegment> batch) {
  ad::Tape tape(false);
  return BatchNll(tape, vocoder, batch).scalar();
}

}  // namespace clvc
