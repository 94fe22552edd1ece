// clvc/pipeline.hpp

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

// Stage-wise training, enrollment, conversion and evaluation on top of the
// model modules. Every entry point is deterministic in (config, manifest,
// seed, input checkpoints).
//
//   train am   manifest (with frame labels)            -> am.ckpt
//   train se   manifest                                -> se.ckpt
//   train cm   manifest + am.ckpt + se.ckpt            -> cm.ckpt
//   train voc  manifest [+ init voc.ckpt]              -> voc.ckpt
//   enroll     manifest + se.ckpt                      -> speakers.ckpt
//   convert    wav + am + cm + speakers [+ voc]        -> wav + sidecar json
//   evaluate   manifest + any of am/se/cm [+ speakers] -> report json

#ifndef CLVC_PIPELINE_HPP_
#define CLVC_PIPELINE_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clvc/acoustic_model.hpp"
#include "clvc/checkpoint.hpp"
#include "clvc/conversion_model.hpp"
#include "clvc/manifest.hpp"
#include "clvc/speaker_encoder.hpp"
#include "clvc/vocoder.hpp"

namespace clvc {

struct StageSchedule {
  int steps = 1000;
  int batch = 4;
  double learning_rate = 1e-3;
};

struct PipelineConfig {
  int sample_rate = 24000;
  ContentMode mode = ContentMode::kMppg;
  TrimOptions trim;

  AcousticModelConfig am;
  StageSchedule am_train;

  SpeakerEncoderConfig se;
  StageSchedule se_train;
  int se_window_frames = 160;
  int se_speakers_per_batch = 4;
  int se_utterances_per_speaker = 5;

  ConversionConfig cm;  // content_dim / speaker_dim are filled in from the prerequisites
  StageSchedule cm_train;
  // Speaker-dependent mode: when set, the converter trains on this speaker's
  // records only and its enrollment vector is frozen into the checkpoint.
  std::string sd_speaker;

  FlowConfig voc;  // hop / win follow sample_rate
  StageSchedule voc_train;
  int voc_segment_samples = 4000;

  EnrollOptions enroll;
  int griffin_lim_iterations = 60;
};

// Defaults follow the full-size architecture; see configs/toy.json for the
// desk-scale settings.
PipelineConfig DefaultConfig();
nlohmann::json ConfigToJson(const PipelineConfig &config);
// `doc` is overlaid on the defaults; unknown keys and wrong types throw
// FormatError naming the key.
PipelineConfig ParseConfig(const nlohmann::json &doc);
PipelineConfig LoadConfig(const std::filesystem::path &path);

// Tab-separated per-step metrics; first column is the 1-based step.
struct MetricsLog {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string ToTsv() const;
};

struct TrainInputs {
  const PipelineConfig *config = nullptr;
  const DatasetManifest *manifest = nullptr;
  std::uint64_t seed = 0;
  const Checkpoint *am = nullptr;         // required by cm
  const Checkpoint *se = nullptr;         // required by cm
  const Checkpoint *init_from = nullptr;  // continue from a same-stage checkpoint
  std::string manifest_sha256;            // recorded in the metadata when set
};

struct TrainResult {
  Checkpoint checkpoint;
  MetricsLog metrics;
};

// stage is one of "am", "se", "cm", "voc".
TrainResult TrainStage(const std::string &stage, const TrainInputs &inputs);

struct TrainCommand {
  std::string stage;
  std::filesystem::path config, manifest, out;
  std::uint64_t seed = 0;
  std::optional<std::string> mode;  // overrides the config's mode
  std::optional<std::filesystem::path> am, se, init_from;
};
// Locks `out`, trains, writes the checkpoint and <out>.metrics.tsv.
TrainResult RunTrainCommand(const TrainCommand &cmd);

// Models restored from checkpoints (the config is read from the metadata).
PipelineConfig CheckpointConfig(const Checkpoint &ckpt);
AcousticModel LoadAcousticModel(const Checkpoint &ckpt);
SpeakerEncoder LoadSpeakerEncoder(const Checkpoint &ckpt);
ConversionModel LoadConversionModel(const Checkpoint &ckpt);
FlowVocoder LoadVocoder(const Checkpoint &ckpt);
ContentMode CheckpointMode(const Checkpoint &cm_ckpt);
// The frozen speaker of a speaker-dependent converter, or nullopt.
std::optional<std::pair<std::string, RowVector>> SpeakerDependentEmbedding(const Checkpoint &cm_ckpt);

// Loads a clip and checks its rate against the config (never resamples).
AudioClip LoadClipChecked(const std::filesystem::path &path, const PipelineConfig &config);

// Enrolls every speaker of the manifest (or only `speaker` when given).
// Tensors are "spk.<id>" (1 x embedding_dim).
Checkpoint EnrollSpeakers(const PipelineConfig &config, const DatasetManifest &manifest,
                          const Checkpoint &se_ckpt, std::uint64_t seed,
                          const std::optional<std::string> &speaker = std::nullopt);
RowVector EnrolledEmbedding(const Checkpoint &enrollment, const std::string &speaker);

enum class VocoderKind { kGriffinLim, kFlow };
VocoderKind ParseVocoderKind(const std::string &name);

struct ConversionOutput {
  Matrix content;  // T x content_dim
  Matrix mel;      // T x 80
  std::vector<AttentionAlignment> alignments;
  AudioClip audio;
};

// trim -> front end -> phonetic + prosody -> convert -> vocode. Throws
// ShapeError if `mode` does not produce the converter's content_dim.
ConversionOutput ConvertClip(const PipelineConfig &config, const AcousticModel &am,
                             const ConversionModel &cm, const FlowVocoder *vocoder,
                             const AudioClip &source, const RowVector &speaker, ContentMode mode,
                             VocoderKind kind, std::uint64_t seed);

struct ConvertCommand {
  std::filesystem::path source, out, am, cm, enrollment;
  std::optional<std::filesystem::path> voc;
  std::string target_speaker;
  std::string mode = "mppg";
  std::string vocoder = "gl";
  std::uint64_t seed = 0;
};
// Writes the WAV and <out>.json (mode, vocoder, frame/sample counts and
// checkpoint SHA-256 hashes). Returns the sidecar document.
nlohmann::json RunConvertCommand(const ConvertCommand &cmd);

struct EvalInputs {
  const PipelineConfig *config = nullptr;
  const DatasetManifest *manifest = nullptr;
  const AcousticModel *am = nullptr;
  const SpeakerEncoder *se = nullptr;
  const ConversionModel *cm = nullptr;
  const Checkpoint *enrollment = nullptr;
  ContentMode mode = ContentMode::kMppg;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> dump_dir;
  // Set for a speaker-dependent converter (see SpeakerDependentEmbedding).
  std::string sd_speaker;
  RowVector sd_embedding;
};

// Metrics that cannot be computed are null, with a reason under "notes".
nlohmann::ordered_json Evaluate(const EvalInputs &inputs);

struct EvaluateCommand {
  std::filesystem::path config, manifest, out;
  std::optional<std::filesystem::path> am, se, cm, enrollment, dump_dir;
  std::uint64_t seed = 0;
};
nlohmann::ordered_json RunEvaluateCommand(const EvaluateCommand &cmd);

// Front-end features of every record, one container per utterance
// (stage "features": log_mel, context_mfcc, prosody) under `out_dir`.
void RunFeaturesCommand(const std::filesystem::path &config, const std::filesystem::path &manifest,
                        const std::filesystem::path &out_dir);

}  // namespace clvc

#endif  // CLVC_PIPELINE_HPP_
