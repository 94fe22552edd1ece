// clvc.cpp

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

// Command-line front end:
//
//   clvc make-toy-corpus --out DIR
//   clvc features  --config C --manifest M --out DIR
//   clvc train-am  --config C --manifest M --seed S --out am.ckpt
//   clvc train-se  --config C --manifest M --seed S --out se.ckpt
//   clvc train-cm  --config C --manifest M --seed S --am am.ckpt --se se.ckpt [--mode dpf] --out cm.ckpt
//   clvc train-voc --config C --manifest M --seed S [--init-from voc.ckpt] --out voc.ckpt
//   clvc enroll    --config C --manifest M --se se.ckpt --seed S --out speakers.ckpt
//   clvc convert   --input src.wav --target-speaker ID --am am.ckpt --cm cm.ckpt
//                  --enrollment speakers.ckpt [--voc voc.ckpt] --mode mppg|dpf
//                  --vocoder gl|flow --seed S --out out.wav
//   clvc evaluate  --config C --manifest M [--am ..] [--se ..] [--cm ..]
//                  [--enrollment ..] [--dump-dir DIR] --seed S --out report.json

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "clvc/pipeline.hpp"
#include "clvc/toy_corpus.hpp"

namespace {

template <typename T>
std::optional<T> Opt(const CLI::Option *opt, const T &value) {
  return opt->count() ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char **argv) {
  using std::filesystem::path;
  CLI::App app{"clvc: cross-lingual voice conversion toolkit"};
  app.require_subcommand(1);

  // make-toy-corpus
  clvc::ToyCorpusOptions toy;
  path toy_out;
  auto *mk = app.add_subcommand("make-toy-corpus", "Write a synthetic labeled corpus");
  mk->add_option("--out", toy_out, "Output directory")->required();
  mk->add_option("--seed", toy.seed, "Generator seed");
  mk->add_option("--sample-rate", toy.sample_rate, "Sample rate (Hz)");
  mk->add_option("--speakers", toy.num_speakers, "Number of speakers");
  mk->add_option("--phonemes", toy.num_phonemes, "Phoneme inventory size");
  mk->add_option("--train-utterances", toy.train_utterances, "Training utterances per speaker");
  mk->add_option("--eval-utterances", toy.eval_utterances, "Evaluation utterances per speaker");
  mk->add_option("--min-seconds", toy.min_seconds, "Shortest utterance");
  mk->add_option("--max-seconds", toy.max_seconds, "Longest utterance");
  mk->add_option("--noise", toy.noise_std, "Additive noise standard deviation");
  mk->add_option("--f0-jitter", toy.f0_jitter, "Per-utterance relative F0 range");
  mk->add_option("--vibrato", toy.vibrato_depth, "Relative vibrato depth");

  // features
  path feat_config, feat_manifest, feat_out;
  auto *feat = app.add_subcommand("features", "Dump front-end features per utterance");
  feat->add_option("--config", feat_config)->required();
  feat->add_option("--manifest", feat_manifest)->required();
  feat->add_option("--out", feat_out, "Output directory")->required();

  // train-*
  clvc::TrainCommand train;
  std::string train_mode;
  path train_am, train_se, train_init;
  std::vector<std::pair<std::string, CLI::App *>> trainers;
  CLI::Option *mode_opt = nullptr, *am_opt = nullptr, *se_opt = nullptr;
  for (const std::string stage : {"am", "se", "cm", "voc"}) {
    auto *t = app.add_subcommand("train-" + stage, "Train the " + stage + " stage");
    t->add_option("--config", train.config)->required();
    t->add_option("--manifest", train.manifest)->required();
    t->add_option("--seed", train.seed)->required();
    t->add_option("--out", train.out, "Checkpoint path")->required();
    if (stage == "cm") {
      am_opt = t->add_option("--am", train_am, "Acoustic-model checkpoint");
      se_opt = t->add_option("--se", train_se, "Speaker-encoder checkpoint");
      mode_opt = t->add_option("--mode", train_mode, "mppg or dpf (overrides the config)");
    }
    t->add_option("--init-from", train_init, "Continue from a checkpoint");
    trainers.emplace_back(stage, t);
  }

  // enroll
  path enr_config, enr_manifest, enr_se, enr_out;
  std::uint64_t enr_seed = 0;
  std::string enr_speaker;
  auto *enr = app.add_subcommand("enroll", "Compute target-speaker embeddings");
  enr->add_option("--config", enr_config)->required();
  enr->add_option("--manifest", enr_manifest)->required();
  enr->add_option("--se", enr_se, "Speaker-encoder checkpoint")->required();
  enr->add_option("--seed", enr_seed)->required();
  enr->add_option("--out", enr_out)->required();
  auto *enr_spk_opt = enr->add_option("--speaker", enr_speaker, "Only this speaker");

  // convert
  clvc::ConvertCommand conv;
  path conv_voc;
  auto *cv = app.add_subcommand("convert", "Convert one utterance to a target voice");
  cv->add_option("--input", conv.source, "Source WAV")->required();
  cv->add_option("--target-speaker", conv.target_speaker)->required();
  cv->add_option("--am", conv.am)->required();
  cv->add_option("--cm", conv.cm)->required();
  cv->add_option("--enrollment", conv.enrollment)->required();
  auto *conv_voc_opt = cv->add_option("--voc", conv_voc, "Flow-vocoder checkpoint");
  cv->add_option("--mode", conv.mode)->check(CLI::IsMember({"mppg", "dpf"}));
  cv->add_option("--vocoder", conv.vocoder)->check(CLI::IsMember({"gl", "flow"}));
  cv->add_option("--seed", conv.seed)->required();
  cv->add_option("--out", conv.out, "Output WAV")->required();

  // evaluate
  clvc::EvaluateCommand ev;
  path ev_am, ev_se, ev_cm, ev_enr, ev_dump;
  auto *evc = app.add_subcommand("evaluate", "Compute the evaluation report");
  evc->add_option("--config", ev.config)->required();
  evc->add_option("--manifest", ev.manifest)->required();
  auto *ev_am_opt = evc->add_option("--am", ev_am);
  auto *ev_se_opt = evc->add_option("--se", ev_se);
  auto *ev_cm_opt = evc->add_option("--cm", ev_cm);
  auto *ev_enr_opt = evc->add_option("--enrollment", ev_enr);
  auto *ev_dump_opt = evc->add_option("--dump-dir", ev_dump, "Write intermediates here");
  evc->add_option("--seed", ev.seed);
  evc->add_option("--out", ev.out, "Report JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (mk->parsed()) {
      clvc::WriteToyCorpus(toy_out, toy);
    } else if (feat->parsed()) {
      clvc::RunFeaturesCommand(feat_config, feat_manifest, feat_out);
    } else if (enr->parsed()) {
      const clvc::PipelineConfig config = clvc::LoadConfig(enr_config);
      const clvc::DatasetManifest manifest = clvc::LoadManifest(enr_manifest);
      for (const auto &w : manifest.warnings) std::cerr << "clvc: warning: " << w << "\n";
      const clvc::Checkpoint se = clvc::LoadCheckpoint(enr_se, "se");
      clvc::PathLock lock(enr_out);
      clvc::SaveCheckpoint(enr_out, clvc::EnrollSpeakers(config, manifest, se, enr_seed,
                                                         Opt(enr_spk_opt, enr_speaker)));
    } else if (cv->parsed()) {
      conv.voc = Opt(conv_voc_opt, conv_voc);
      clvc::RunConvertCommand(conv);
    } else if (evc->parsed()) {
      ev.am = Opt(ev_am_opt, ev_am);
      ev.se = Opt(ev_se_opt, ev_se);
      ev.cm = Opt(ev_cm_opt, ev_cm);
      ev.enrollment = Opt(ev_enr_opt, ev_enr);
      ev.dump_dir = Opt(ev_dump_opt, ev_dump);
      std::cout << clvc::RunEvaluateCommand(ev).dump(2) << "\n";
    } else {
      for (const auto &[stage, sub] : trainers) {
        if (!sub->parsed()) continue;
        train.stage = stage;
        if (stage == "cm") {
          train.am = Opt(am_opt, train_am);
          train.se = Opt(se_opt, train_se);
          train.mode = Opt(mode_opt, train_mode);
        }
        if (sub->get_option("--init-from")->count()) train.init_from = train_init;
        const clvc::TrainResult r = clvc::RunTrainCommand(train);
        if (!r.metrics.rows.empty())
          std::printf("%s: %zu steps, final %s %.6g\n", stage.c_str(), r.metrics.rows.size(),
                      r.metrics.columns[1].c_str(), r.metrics.rows.back()[1]);
      }
    }
  } catch (const std::exception &e) {
    std::cerr << "clvc: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
