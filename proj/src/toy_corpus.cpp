// toy_corpus.cpp

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

#include "clvc/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "clvc/features.hpp"
#include "clvc/manifest.hpp"

namespace clvc {

namespace {

// Vowel-like formant targets (Hz).
constexpr double kVowels[][3] = {
    {730, 1090, 2440}, {270, 2290, 3010}, {300, 870, 2240}, {530, 1840, 2480},
    {570, 840, 2410},  {660, 1720, 2410}, {490, 1350, 1690}, {440, 1020, 2240},
};

}  // namespace

ToyCorpus::ToyCorpus(const ToyCorpusOptions &options) : options_(options) {
  if (options_.sample_rate < 8000) throw PreconditionError("toy corpus needs >= 8 kHz");
  if (options_.num_phonemes < 2 || options_.num_speakers < 1 || options_.languages.empty())
    throw PreconditionError("toy corpus needs >= 2 phonemes, >= 1 speaker and a language");
  if (options_.noise_std < 0 || options_.f0_jitter < 0 || options_.f0_jitter >= 1 ||
      options_.vibrato_depth < 0 || options_.vibrato_depth >= 1)
    throw PreconditionError("bad toy noise, jitter or vibrato setting");
  if (options_.min_segment_frames < 1 || options_.max_segment_frames < options_.min_segment_frames)
    throw PreconditionError("bad toy segment durations");
  Rng rng(options_.seed);
  const int table = static_cast<int>(std::size(kVowels));
  for (int p = 0; p < options_.num_phonemes; ++p) {
    ToyPhoneme ph;
    for (int f = 0; f < 3; ++f) ph.formants[f] = kVowels[p % table][f];
    if (p >= table) {
      ph.formants[0] = UniformRange(rng, 250, 850);
      ph.formants[1] = UniformRange(rng, 900, 2400);
      ph.formants[2] = UniformRange(rng, 2500, 3400);
    }
    phonemes_.push_back(ph);
  }
  const int n = options_.num_speakers, num_lang = static_cast<int>(options_.languages.size());
  for (int s = 0; s < n; ++s) {
    ToySpeaker sp;
    char id[16];
    std::snprintf(id, sizeof id, "s%02d", s);
    sp.id = id;
    const int lang = s % num_lang;
    sp.language = options_.languages[static_cast<std::size_t>(lang)];
    // Spread F0 and formant scale so that neighbors differ in both.
    sp.f0 = 90.0 + 170.0 * (s + 0.5) / n * UniformRange(rng, 0.97, 1.03);
    sp.formant_scale = 0.85 + 0.3 * (((s * 3) % n) + 0.5) / n;
    for (int p = 0; p < options_.num_phonemes; ++p)
      if (num_lang == 1 || options_.num_phonemes < 4 || p % num_lang != (lang + 1) % num_lang ||
          p < 2)
        sp.phonemes.push_back(p);
    speakers_.push_back(sp);
  }
}

ToyUtterance ToyCorpus::Synthesize(int speaker, std::span<const int> phonemes,
                                   std::span<const int> durations, std::uint64_t seed) const {
  if (speaker < 0 || speaker >= static_cast<int>(speakers_.size()))
    throw PreconditionError("unknown toy speaker index");
  if (phonemes.empty() || phonemes.size() != durations.size())
    throw PreconditionError("phoneme and duration lists must be non-empty and equal length");
  const ToySpeaker &sp = speakers_[static_cast<std::size_t>(speaker)];
  const int sr = options_.sample_rate;
  const int win = MsToSamples(sr, 32.0), hop = MsToSamples(sr, 10.0);

  ToyUtterance u;
  u.speaker_id = sp.id;
  u.language = sp.language;
  for (std::size_t k = 0; k < phonemes.size(); ++k) {
    if (phonemes[k] < 0 || phonemes[k] >= options_.num_phonemes || durations[k] < 1)
      throw PreconditionError("bad toy phoneme or duration");
    u.labels.insert(u.labels.end(), static_cast<std::size_t>(durations[k]), phonemes[k]);
  }
  const std::size_t frames = u.labels.size();
  const std::size_t length = (frames - 1) * static_cast<std::size_t>(hop) + static_cast<std::size_t>(win);
  // Sample n belongs to the frame whose center is nearest: boundaries sit
  // (win - hop) / 2 samples after each frame start.
  const double offset = (win - hop) / 2.0;

  Rng rng(seed);
  const double f0 = sp.f0 * UniformRange(rng, 1.0 - options_.f0_jitter, 1.0 + options_.f0_jitter);
  const double vibrato_rate = UniformRange(rng, 4.0, 6.0);
  const int harmonics = static_cast<int>(0.45 * sr / f0);
  // Per-phoneme harmonic amplitudes at the base F0.
  std::vector<std::vector<double>> amps(phonemes_.size(), std::vector<double>(harmonics));
  for (std::size_t p = 0; p < phonemes_.size(); ++p)
    for (int h = 1; h <= harmonics; ++h) {
      const double f = h * f0;
      double a = 0.02;
      for (int i = 0; i < 3; ++i) {
        const double center = sp.formant_scale * phonemes_[p].formants[i];
        const double bw = 60.0 + 40.0 * i;
        a += std::pow(0.6, i) * std::exp(-0.5 * std::pow((f - center) / bw, 2));
      }
      amps[p][static_cast<std::size_t>(h - 1)] = a / std::sqrt(static_cast<double>(h));
    }

  std::vector<double> x(length, 0.0);
  double phase = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t n = 0; n < length; ++n) {
    const double pos = (static_cast<double>(n) - offset) / hop;
    const auto frame = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0,
                                                           static_cast<double>(frames - 1)));
    const auto &a = amps[static_cast<std::size_t>(u.labels[frame])];
    const double t = static_cast<double>(n) / sr;
    phase += two_pi * f0 * (1.0 + options_.vibrato_depth * std::sin(two_pi * vibrato_rate * t)) / sr;
    if (phase > two_pi) phase -= two_pi;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) v += a[static_cast<std::size_t>(h)] * std::sin((h + 1) * phase);
    x[n] = v;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  u.audio.sample_rate = sr;
  u.audio.samples.resize(length);
  for (std::size_t n = 0; n < length; ++n)
    u.audio.samples[n] = static_cast<float>(0.5 * x[n] / peak + options_.noise_std * StandardNormal(rng));
  return u;
}

ToyUtterance ToyCorpus::Random(int speaker, double seconds, std::uint64_t seed) const {
  const ToySpeaker &sp = speakers_.at(static_cast<std::size_t>(speaker));
  Rng rng(MixSeed(seed, 0x70));
  const int target = std::max(1, static_cast<int>(std::lround(seconds * 100.0)));
  std::vector<int> ph, dur;
  int total = 0, prev = -1;
  while (total < target) {
    int p;
    do {
      p = sp.phonemes[UniformIndex(rng, sp.phonemes.size())];
    } while (p == prev && sp.phonemes.size() > 1);
    const int span = options_.max_segment_frames - options_.min_segment_frames + 1;
    int d = options_.min_segment_frames + static_cast<int>(UniformIndex(rng, static_cast<std::uint64_t>(span)));
    d = std::min(d, std::max(1, target - total));
    ph.push_back(p);
    dur.push_back(d);
    total += d;
    prev = p;
  }
  return Synthesize(speaker, ph, dur, seed);
}

ToyUtterance ToyCorpus::Sustained(int speaker, int phoneme, double seconds) const {
  const int frames = std::max(1, static_cast<int>(std::lround(seconds * 100.0)));
  const int ph[] = {phoneme}, dur[] = {frames};
  return Synthesize(speaker, ph, dur, 0);
}

void WriteToyCorpus(const std::filesystem::path &dir, const ToyCorpusOptions &options) {
  namespace fs = std::filesystem;
  ToyCorpus corpus(options);
  fs::create_directories(dir / "wav");
  fs::create_directories(dir / "labels");
  DatasetManifest train, eval;
  const int per_speaker = options.train_utterances + options.eval_utterances;
  for (std::size_t s = 0; s < corpus.speakers().size(); ++s) {
    for (int i = 0; i < per_speaker; ++i) {
      const std::uint64_t seed = MixSeed(options.seed, s * 1000 + static_cast<std::size_t>(i));
      Rng rng(seed);
      const double seconds = UniformRange(rng, options.min_seconds, options.max_seconds);
      ToyUtterance u = corpus.Random(static_cast<int>(s), seconds, seed);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d", u.speaker_id.c_str(), i);
      ManifestRecord r;
      r.audio_path = dir / "wav" / (std::string(name) + ".wav");
      r.frame_labels_path = dir / "labels" / (std::string(name) + ".lab");
      r.speaker_id = u.speaker_id;
      r.language_tag = u.language;
      SaveWav(r.audio_path, u.audio);
      SaveFrameLabels(*r.frame_labels_path, u.labels);
      (i < options.train_utterances ? train : eval).records.push_back(r);
    }
  }
  SaveManifest(dir / "train.jsonl", train);
  SaveManifest(dir / "eval.jsonl", eval);
}

}  // namespace clvc
