// pipeline.cpp

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

#include "clvc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <set>

namespace clvc {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- configuration

PipelineConfig DefaultConfig() { return PipelineConfig{}; }

namespace {

const char *WindowCenterName(WindowCenter c) {
  return c == WindowCenter::kStep ? "step" : "previous_peak";
}

WindowCenter ParseWindowCenter(const std::string &s) {
  if (s == "step") return WindowCenter::kStep;
  if (s == "previous_peak") return WindowCenter::kPreviousPeak;
  throw FormatError("config: cm.window_center must be 'step' or 'previous_peak', got '" + s + "'");
}

json ScheduleJson(const StageSchedule &s, bool with_batch = true) {
  json j = {{"steps", s.steps}, {"learning_rate", s.learning_rate}};
  if (with_batch) j["batch"] = s.batch;
  return j;
}

// Rejects keys absent from the defaults and values of the wrong kind.
void CheckAgainst(const json &defaults, const json &doc, const std::string &path) {
  if (!doc.is_object()) throw FormatError("config: '" + path + "' must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw FormatError("config: unknown key '" + key + "'");
    const json &d = defaults[it.key()];
    const json &v = it.value();
    bool ok;
    if (d.is_object()) {
      CheckAgainst(d, v, key);
      continue;
    } else if (d.is_boolean()) {
      ok = v.is_boolean();
    } else if (d.is_number_integer()) {
      ok = v.is_number_integer();
    } else if (d.is_number()) {
      ok = v.is_number();
    } else if (d.is_string()) {
      ok = v.is_string();
    } else if (d.is_array()) {
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json &e) {
             return e.is_number_integer();
           });
    } else {
      ok = false;
    }
    if (!ok) throw FormatError("config: '" + key + "' has the wrong type");
  }
}

StageSchedule ReadSchedule(const json &j, const StageSchedule &fallback) {
  StageSchedule s = fallback;
  s.steps = j.at("steps").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("batch")) s.batch = j.at("batch").get<int>();
  if (s.steps < 0 || s.batch < 1 || !(s.learning_rate > 0.0))
    throw FormatError("config: bad training schedule");
  return s;
}

}  // namespace

json ConfigToJson(const PipelineConfig &c) {
  json j;
  j["sample_rate"] = c.sample_rate;
  j["mode"] = ContentModeName(c.mode);
  j["trim"] = {{"threshold_db", c.trim.threshold_db}, {"frame_ms", c.trim.frame_ms}};
  j["am"] = ScheduleJson(c.am_train);
  j["am"].update({{"num_layers", c.am.num_layers},
                  {"hidden", c.am.hidden},
                  {"hidden_per_direction", c.am.hidden_per_direction},
                  {"num_phonemes", c.am.num_phonemes}});
  j["se"] = ScheduleJson(c.se_train, false);
  j["se"].update({{"hidden", c.se.hidden},
                  {"num_layers", c.se.num_layers},
                  {"embedding_dim", c.se.embedding_dim},
                  {"min_frames", c.se.min_frames},
                  {"w_init", c.se.w_init},
                  {"b_init", c.se.b_init},
                  {"window_frames", c.se_window_frames},
                  {"speakers_per_batch", c.se_speakers_per_batch},
                  {"utterances_per_speaker", c.se_utterances_per_speaker}});
  const ConversionConfig &m = c.cm;
  j["cm"] = ScheduleJson(c.cm_train);
  j["cm"].update({{"encoder_conv_layers", m.encoder_conv_layers},
                  {"encoder_conv_channels", m.encoder_conv_channels},
                  {"encoder_kernel", m.encoder_kernel},
                  {"encoder_dim", m.encoder_dim},
                  {"attention_dim", m.attention_dim},
                  {"location_channels", m.location_channels},
                  {"location_kernel", m.location_kernel},
                  {"prenet_dims", m.prenet_dims},
                  {"prenet_dropout", m.prenet_dropout},
                  {"prenet_dropout_at_inference", m.prenet_dropout_at_inference},
                  {"attention_rnn_dim", m.attention_rnn_dim},
                  {"decoder_rnn_dim", m.decoder_rnn_dim},
                  {"postnet_layers", m.postnet_layers},
                  {"postnet_channels", m.postnet_channels},
                  {"postnet_kernel", m.postnet_kernel},
                  {"window_left", m.window_left},
                  {"window_right", m.window_right},
                  {"window_center", WindowCenterName(m.window_center)},
                  {"speaker_dependent", c.sd_speaker}});
  const FlowConfig &v = c.voc;
  j["voc"] = ScheduleJson(c.voc_train);
  j["voc"].update({{"n_flows", v.n_flows},
                   {"squeeze_group", v.squeeze_group},
                   {"hidden", v.hidden},
                   {"kernel", v.kernel},
                   {"orthogonal_mix_init", v.orthogonal_mix_init},
                   {"train_sigma", v.train_sigma},
                   {"synth_sigma", v.synth_sigma},
                   {"max_condition", v.max_condition},
                   {"segment_samples", c.voc_segment_samples}});
  j["enroll"] = {{"num_segments", c.enroll.num_segments},
                 {"segment_seconds", c.enroll.segment_seconds}};
  j["griffin_lim"] = {{"iterations", c.griffin_lim_iterations}};
  return j;
}

PipelineConfig ParseConfig(const json &doc) {
  const PipelineConfig defaults = DefaultConfig();
  json merged = ConfigToJson(defaults);
  CheckAgainst(merged, doc, "");
  merged.merge_patch(doc);

  PipelineConfig c = defaults;
  try {
    c.sample_rate = merged.at("sample_rate").get<int>();
    if (c.sample_rate <= 0) throw FormatError("config: sample_rate must be positive");
    c.mode = ParseContentMode(merged.at("mode").get<std::string>());
    c.trim.threshold_db = merged.at("trim").at("threshold_db").get<double>();
    c.trim.frame_ms = merged.at("trim").at("frame_ms").get<double>();

    const json &am = merged.at("am");
    c.am_train = ReadSchedule(am, c.am_train);
    c.am.num_layers = am.at("num_layers").get<int>();
    c.am.hidden = am.at("hidden").get<int>();
    c.am.hidden_per_direction = am.at("hidden_per_direction").get<bool>();
    c.am.num_phonemes = am.at("num_phonemes").get<int>();
    c.am.Validate();

    const json &se = merged.at("se");
    c.se_train = ReadSchedule(se, c.se_train);
    c.se.hidden = se.at("hidden").get<int>();
    c.se.num_layers = se.at("num_layers").get<int>();
    c.se.embedding_dim = se.at("embedding_dim").get<int>();
    c.se.min_frames = se.at("min_frames").get<int>();
    c.se.w_init = se.at("w_init").get<double>();
    c.se.b_init = se.at("b_init").get<double>();
    c.se_window_frames = se.at("window_frames").get<int>();
    c.se_speakers_per_batch = se.at("speakers_per_batch").get<int>();
    c.se_utterances_per_speaker = se.at("utterances_per_speaker").get<int>();
    c.se.Validate();
    if (c.se_window_frames < c.se.min_frames)
      throw FormatError("config: se.window_frames must be >= se.min_frames");
    if (c.se_speakers_per_batch < 2 || c.se_utterances_per_speaker < 2)
      throw FormatError("config: GE2E batches need >= 2 speakers x 2 utterances");

    const json &cm = merged.at("cm");
    c.cm_train = ReadSchedule(cm, c.cm_train);
    ConversionConfig &m = c.cm;
    m.encoder_conv_layers = cm.at("encoder_conv_layers").get<int>();
    m.encoder_conv_channels = cm.at("encoder_conv_channels").get<int>();
    m.encoder_kernel = cm.at("encoder_kernel").get<int>();
    m.encoder_dim = cm.at("encoder_dim").get<int>();
    m.attention_dim = cm.at("attention_dim").get<int>();
    m.location_channels = cm.at("location_channels").get<int>();
    m.location_kernel = cm.at("location_kernel").get<int>();
    m.prenet_dims = cm.at("prenet_dims").get<std::vector<int>>();
    m.prenet_dropout = cm.at("prenet_dropout").get<double>();
    m.prenet_dropout_at_inference = cm.at("prenet_dropout_at_inference").get<bool>();
    m.attention_rnn_dim = cm.at("attention_rnn_dim").get<int>();
    m.decoder_rnn_dim = cm.at("decoder_rnn_dim").get<int>();
    m.postnet_layers = cm.at("postnet_layers").get<int>();
    m.postnet_channels = cm.at("postnet_channels").get<int>();
    m.postnet_kernel = cm.at("postnet_kernel").get<int>();
    m.window_left = cm.at("window_left").get<int>();
    m.window_right = cm.at("window_right").get<int>();
    m.window_center = ParseWindowCenter(cm.at("window_center").get<std::string>());
    c.sd_speaker = cm.at("speaker_dependent").get<std::string>();
    m.content_dim = c.am.ContentDim(c.mode);
    m.speaker_dim = c.se.embedding_dim;
    m.Validate();

    const json &voc = merged.at("voc");
    c.voc_train = ReadSchedule(voc, c.voc_train);
    FlowConfig &v = c.voc;
    v = FlowConfig::ForSampleRate(c.sample_rate);
    v.n_flows = voc.at("n_flows").get<int>();
    v.squeeze_group = voc.at("squeeze_group").get<int>();
    v.hidden = voc.at("hidden").get<int>();
    v.kernel = voc.at("kernel").get<int>();
    v.orthogonal_mix_init = voc.at("orthogonal_mix_init").get<bool>();
    v.train_sigma = voc.at("train_sigma").get<double>();
    v.synth_sigma = voc.at("synth_sigma").get<double>();
    v.max_condition = voc.at("max_condition").get<double>();
    c.voc_segment_samples = voc.at("segment_samples").get<int>();
    v.Validate();
    if (c.voc_segment_samples < v.squeeze_group)
      throw FormatError("config: voc.segment_samples must hold at least one squeeze group");

    c.enroll.num_segments = merged.at("enroll").at("num_segments").get<int>();
    c.enroll.segment_seconds = merged.at("enroll").at("segment_seconds").get<double>();
    if (c.enroll.num_segments < 1 || !(c.enroll.segment_seconds > 0.0))
      throw FormatError("config: bad enrollment settings");
    c.griffin_lim_iterations = merged.at("griffin_lim").at("iterations").get<int>();
  } catch (const json::exception &e) {
    throw FormatError(std::string("config: ") + e.what());
  } catch (const PreconditionError &e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig LoadConfig(const fs::path &path) {
  if (!fs::is_regular_file(path))
    throw PreconditionError("config '" + path.string() + "' does not exist");
  json doc;
  try {
    doc = json::parse(ReadFileBytes(path));
  } catch (const json::parse_error &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ParseConfig(doc);
}

std::string MetricsLog::ToTsv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "\t" : "") + columns[i];
  out += "\n";
  char buf[64];
  for (const auto &row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i == 0)
        std::snprintf(buf, sizeof buf, "%.0f", row[i]);
      else
        std::snprintf(buf, sizeof buf, "\t%.9g", row[i]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// ---- helpers

namespace {

std::uint64_t Fnv1a(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

Checkpoint NewCheckpoint(const std::string &stage, const PipelineConfig &config,
                         std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.stage = stage;
  ckpt.metadata["config"] = ConfigToJson(config);
  ckpt.metadata["seed"] = seed;
  return ckpt;
}

void CheckFinite(double loss, const std::string &stage, int step) {
  if (!std::isfinite(loss))
    throw NumericError(stage + " loss is not finite at step " + std::to_string(step));
}

std::vector<std::size_t> PickBatch(Rng &rng, std::size_t population, int batch) {
  std::vector<std::size_t> out;
  for (int i = 0; i < batch; ++i) out.push_back(UniformIndex(rng, population));
  return out;
}

Matrix StackRows(const std::vector<Matrix> &parts) {
  Eigen::Index rows = 0;
  for (const auto &p : parts) rows += p.rows();
  Matrix out(rows, parts.empty() ? 0 : parts.front().cols());
  Eigen::Index r = 0;
  for (const auto &p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

nn::ParameterStore InitParams(const TrainInputs &in, const std::string &stage) {
  if (in.init_from->stage != stage)
    throw PreconditionError("init_from is a '" + in.init_from->stage + "' checkpoint, expected '" +
                            stage + "'");
  return TensorsToStore(in.init_from->tensors);
}

TrainResult TrainAcousticModel(const TrainInputs &in) {
  const PipelineConfig &cfg = *in.config;
  std::vector<LabeledUtterance> data;
  for (std::size_t i = 0; i < in.manifest->records.size(); ++i) {
    const ManifestRecord &r = in.manifest->records[i];
    if (!r.frame_labels_path)
      throw PreconditionError("manifest record " + std::to_string(i + 1) + " (" +
                              r.audio_path.string() +
                              ") has no frame labels; acoustic-model training needs them");
    const AudioClip clip = LoadClipChecked(r.audio_path, cfg);
    LabeledUtterance u;
    u.features = StackContext(MfccFromLogMel(ComputeMelSpectrogram(clip).values));
    u.labels = LoadFrameLabels(*r.frame_labels_path);
    if (static_cast<Eigen::Index>(u.labels.size()) != u.features.rows())
      throw ShapeError(r.frame_labels_path->string() + ": " + std::to_string(u.labels.size()) +
                       " labels for " + std::to_string(u.features.rows()) + " frames");
    for (int l : u.labels)
      if (l >= cfg.am.num_phonemes)
        throw ShapeError(r.frame_labels_path->string() + ": label " + std::to_string(l) +
                         " is outside the " + std::to_string(cfg.am.num_phonemes) +
                         "-phoneme inventory");
    data.push_back(std::move(u));
  }
  if (data.empty()) throw PreconditionError("acoustic-model training needs a non-empty manifest");

  std::optional<AcousticModel> model;
  if (in.init_from) {
    model.emplace(cfg.am, InitParams(in, "am"));
  } else {
    model.emplace(cfg.am, MixSeed(in.seed, 1));
    std::vector<Matrix> feats;
    for (const auto &u : data) feats.push_back(u.features);
    nn::FitNormalizer(&model->params(), "am.input", StackRows(feats));
  }
  nn::Adam adam({.learning_rate = cfg.am_train.learning_rate});
  TrainResult result;
  result.metrics.columns = {"step", "loss"};
  double loss = 0.0;
  for (int step = 0; step < cfg.am_train.steps; ++step) {
    Rng rng(MixSeed(in.seed, 0x1000000ull + static_cast<std::uint64_t>(step)));
    std::vector<LabeledUtterance> batch;
    for (std::size_t i : PickBatch(rng, data.size(), cfg.am_train.batch)) batch.push_back(data[i]);
    loss = AmTrainStep(&*model, &adam, batch);
    CheckFinite(loss, "am", step + 1);
    result.metrics.rows.push_back({static_cast<double>(step + 1), loss});
  }
  result.checkpoint = NewCheckpoint("am", cfg, in.seed);
  result.checkpoint.metadata["final_loss"] = loss;
  result.checkpoint.metadata["frame_accuracy"] = FrameAccuracy(*model, data);
  result.checkpoint.tensors = StoreToTensors(model->params());
  return result;
}

struct SpeakerMels {
  std::string id;
  std::vector<Matrix> mels;
};

TrainResult TrainSpeakerEncoderStage(const TrainInputs &in) {
  const PipelineConfig &cfg = *in.config;
  std::vector<SpeakerMels> speakers;
  std::vector<Matrix> all;
  for (const auto &[id, indices] : in.manifest->BySpeaker()) {
    SpeakerMels s{id, {}};
    for (std::size_t i : indices) {
      Matrix mel = ComputeMelSpectrogram(
                       TrimSilence(LoadClipChecked(in.manifest->records[i].audio_path, cfg), cfg.trim))
                       .values;
      all.push_back(mel);
      if (mel.rows() >= cfg.se_window_frames) s.mels.push_back(std::move(mel));
    }
    if (!s.mels.empty()) speakers.push_back(std::move(s));
  }
  if (speakers.size() < 2)
    throw PreconditionError("speaker-encoder training needs >= 2 speakers with utterances of at "
                            "least " + std::to_string(cfg.se_window_frames) + " frames");
  const int n = std::min<int>(cfg.se_speakers_per_batch, static_cast<int>(speakers.size()));
  const int m = cfg.se_utterances_per_speaker;

  std::optional<SpeakerEncoder> model;
  if (in.init_from) {
    model.emplace(cfg.se, InitParams(in, "se"));
  } else {
    model.emplace(cfg.se, MixSeed(in.seed, 1));
    nn::FitNormalizer(&model->params(), "se.input", StackRows(all));
  }
  nn::Adam adam({.learning_rate = cfg.se_train.learning_rate});
  TrainResult result;
  result.metrics.columns = {"step", "loss"};
  double loss = 0.0;
  const Eigen::Index w = cfg.se_window_frames;
  for (int step = 0; step < cfg.se_train.steps; ++step) {
    Rng rng(MixSeed(in.seed, 0x2000000ull + static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> order(speakers.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
      std::swap(order[i], order[i + UniformIndex(rng, order.size() - i)]);
    std::vector<Matrix> windows;
    for (int j = 0; j < n; ++j) {
      const SpeakerMels &s = speakers[order[static_cast<std::size_t>(j)]];
      for (int u = 0; u < m; ++u) {
        const Matrix &mel = s.mels[UniformIndex(rng, s.mels.size())];
        const auto off = static_cast<Eigen::Index>(
            UniformIndex(rng, static_cast<std::uint64_t>(mel.rows() - w + 1)));
        windows.push_back(mel.middleRows(off, w));
      }
    }
    loss = SeTrainStep(&*model, &adam, windows, n, m);
    CheckFinite(loss, "se", step + 1);
    result.metrics.rows.push_back({static_cast<double>(step + 1), loss});
  }
  result.checkpoint = NewCheckpoint("se", cfg, in.seed);
  result.checkpoint.metadata["final_loss"] = loss;
  result.checkpoint.tensors = StoreToTensors(model->params());
  return result;
}

TrainResult TrainConversionStage(const TrainInputs &in) {
  const PipelineConfig &cfg = *in.config;
  if (!in.am) throw PreconditionError("train-cm requires an acoustic-model checkpoint (am)");
  if (!in.se) throw PreconditionError("train-cm requires a speaker-encoder checkpoint (se)");
  const AcousticModel am = LoadAcousticModel(*in.am);
  DatasetManifest manifest = *in.manifest;
  if (!cfg.sd_speaker.empty()) {
    std::erase_if(manifest.records,
                  [&](const ManifestRecord &r) { return r.speaker_id != cfg.sd_speaker; });
    if (manifest.records.empty())
      throw PreconditionError("speaker-dependent target '" + cfg.sd_speaker +
                              "' has no records in the manifest");
  }
  const Checkpoint enrollment = EnrollSpeakers(cfg, manifest, *in.se, MixSeed(in.seed, 2));

  ConversionConfig cc = cfg.cm;
  cc.content_dim = am.config().ContentDim(cfg.mode);
  cc.speaker_dim = static_cast<int>(EnrolledEmbedding(enrollment, manifest.records.at(0).speaker_id).size());

  std::vector<ConversionItem> data;
  std::vector<Matrix> contents, mels;
  for (const auto &r : manifest.records) {
    const FrontEndFeatures front =
        ComputeFrontEnd(TrimSilence(LoadClipChecked(r.audio_path, cfg), cfg.trim));
    ConversionItem item;
    item.content = ExtractPhoneticFeatures(front, cfg.mode, am);
    item.target = front.log_mel;
    item.speaker = EnrolledEmbedding(enrollment, r.speaker_id);
    contents.push_back(item.content);
    mels.push_back(item.target);
    data.push_back(std::move(item));
  }

  std::optional<ConversionModel> model;
  if (in.init_from) {
    model.emplace(cc, InitParams(in, "cm"));
  } else {
    model.emplace(cc, MixSeed(in.seed, 1));
    nn::FitNormalizer(&model->params(), "cm.input", StackRows(contents));
    nn::FitNormalizer(&model->params(), "cm.mel", StackRows(mels));
  }
  nn::Adam adam({.learning_rate = cfg.cm_train.learning_rate});
  TrainResult result;
  result.metrics.columns = {"step", "loss", "pre_mse", "post_mse"};
  ConversionLosses losses;
  for (int step = 0; step < cfg.cm_train.steps; ++step) {
    Rng rng(MixSeed(in.seed, 0x3000000ull + static_cast<std::uint64_t>(step)));
    std::vector<ConversionItem> batch;
    for (std::size_t i : PickBatch(rng, data.size(), cfg.cm_train.batch)) batch.push_back(data[i]);
    losses = CmTrainStep(&*model, &adam, batch,
                         MixSeed(in.seed, 0x3800000ull + static_cast<std::uint64_t>(step)));
    CheckFinite(losses.pre + losses.post, "cm", step + 1);
    result.metrics.rows.push_back(
        {static_cast<double>(step + 1), losses.pre + losses.post, losses.pre, losses.post});
  }
  result.checkpoint = NewCheckpoint("cm", cfg, in.seed);
  result.checkpoint.metadata["mode"] = ContentModeName(cfg.mode);
  result.checkpoint.metadata["content_dim"] = cc.content_dim;
  result.checkpoint.metadata["speaker_dim"] = cc.speaker_dim;
  if (!cfg.sd_speaker.empty()) {
    const RowVector frozen = EnrolledEmbedding(enrollment, cfg.sd_speaker);
    result.checkpoint.metadata["sd_embedding"] = std::vector<double>(frozen.data(), frozen.data() + frozen.size());
  }
  result.checkpoint.metadata["am_sha256"] = Sha256Hex(SerializeCheckpoint(*in.am));
  result.checkpoint.metadata["se_sha256"] = Sha256Hex(SerializeCheckpoint(*in.se));
  result.checkpoint.metadata["final_loss"] = losses.pre + losses.post;
  result.checkpoint.tensors = StoreToTensors(model->params());
  return result;
}

TrainResult TrainVocoderStage(const TrainInputs &in) {
  const PipelineConfig &cfg = *in.config;
  std::optional<FlowVocoder> model;
  std::vector<AudioClip> clips;
  std::vector<Matrix> mels;
  for (const auto &r : in.manifest->records) {
    clips.push_back(LoadClipChecked(r.audio_path, cfg));
    mels.push_back(ComputeMelSpectrogram(clips.back()).values);
  }
  if (in.init_from) {
    model.emplace(cfg.voc, InitParams(in, "voc"));
  } else {
    model.emplace(cfg.voc, MixSeed(in.seed, 1));
    nn::FitNormalizer(&model->params(), "voc.mel", StackRows(mels));
  }
  const std::size_t g = static_cast<std::size_t>(cfg.voc.squeeze_group);
  const std::size_t seg = static_cast<std::size_t>(cfg.voc_segment_samples) / g * g;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (clips[i].samples.size() >= seg) usable.push_back(i);
  if (usable.empty())
    throw PreconditionError("vocoder training needs clips of at least " + std::to_string(seg) +
                            " samples");

  nn::Adam adam({.learning_rate = cfg.voc_train.learning_rate});
  TrainResult result;
  result.metrics.columns = {"step", "nll"};
  double loss = 0.0;
  for (int step = 0; step < cfg.voc_train.steps; ++step) {
    Rng rng(MixSeed(in.seed, 0x4000000ull + static_cast<std::uint64_t>(step)));
    std::vector<FlowSegment> batch;
    for (int b = 0; b < cfg.voc_train.batch; ++b) {
      const std::size_t c = usable[UniformIndex(rng, usable.size())];
      const std::size_t slots = (clips[c].samples.size() - seg) / g + 1;
      batch.push_back(model->MakeSegment(clips[c], mels[c], g * UniformIndex(rng, slots), seg));
    }
    loss = VocTrainStep(&*model, &adam, batch);
    CheckFinite(loss, "voc", step + 1);
    result.metrics.rows.push_back({static_cast<double>(step + 1), loss});
  }
  result.checkpoint = NewCheckpoint("voc", cfg, in.seed);
  result.checkpoint.metadata["final_loss"] = loss;
  if (in.init_from)
    result.checkpoint.metadata["init_from_sha256"] = Sha256Hex(SerializeCheckpoint(*in.init_from));
  result.checkpoint.tensors = StoreToTensors(model->params());
  return result;
}

}  // namespace

TrainResult TrainStage(const std::string &stage, const TrainInputs &in) {
  if (!in.config || !in.manifest) throw PreconditionError("training needs a config and a manifest");
  if (in.manifest->records.empty()) throw PreconditionError("training manifest is empty");
  TrainResult result;
  if (stage == "am") {
    result = TrainAcousticModel(in);
  } else if (stage == "se") {
    result = TrainSpeakerEncoderStage(in);
  } else if (stage == "cm") {
    result = TrainConversionStage(in);
  } else if (stage == "voc") {
    result = TrainVocoderStage(in);
  } else {
    throw PreconditionError("unknown training stage '" + stage + "' (am, se, cm, voc)");
  }
  result.checkpoint.metadata["steps"] = result.metrics.rows.size();
  if (!in.manifest_sha256.empty()) result.checkpoint.metadata["manifest_sha256"] = in.manifest_sha256;
  return result;
}

TrainResult RunTrainCommand(const TrainCommand &cmd) {
  if (cmd.stage == "cm" && !cmd.am)
    throw PreconditionError("train-cm requires an acoustic-model checkpoint (--am)");
  if (cmd.stage == "cm" && !cmd.se)
    throw PreconditionError("train-cm requires a speaker-encoder checkpoint (--se)");
  PipelineConfig config = LoadConfig(cmd.config);
  if (cmd.mode) {
    json doc = ConfigToJson(config);
    doc["mode"] = *cmd.mode;
    config = ParseConfig(doc);
  }
  const DatasetManifest manifest = LoadManifest(cmd.manifest);
  std::optional<Checkpoint> am, se, init;
  if (cmd.am) am = LoadCheckpoint(*cmd.am, "am");
  if (cmd.se) se = LoadCheckpoint(*cmd.se, "se");
  if (cmd.init_from) init = LoadCheckpoint(*cmd.init_from, cmd.stage);

  PathLock lock(cmd.out);
  TrainInputs in;
  in.config = &config;
  in.manifest = &manifest;
  in.seed = cmd.seed;
  in.am = am ? &*am : nullptr;
  in.se = se ? &*se : nullptr;
  in.init_from = init ? &*init : nullptr;
  in.manifest_sha256 = FileSha256(cmd.manifest);
  TrainResult result = TrainStage(cmd.stage, in);
  SaveCheckpoint(cmd.out, result.checkpoint);
  WriteFileBytes(cmd.out.string() + ".metrics.tsv", result.metrics.ToTsv());
  return result;
}

// ---- restoring models

PipelineConfig CheckpointConfig(const Checkpoint &ckpt) {
  if (!ckpt.metadata.contains("config"))
    throw FormatError("checkpoint (stage '" + ckpt.stage + "') has no config in its metadata");
  return ParseConfig(ckpt.metadata.at("config"));
}

AcousticModel LoadAcousticModel(const Checkpoint &ckpt) {
  if (ckpt.stage != "am") throw PreconditionError("expected an 'am' checkpoint, got '" + ckpt.stage + "'");
  return AcousticModel(CheckpointConfig(ckpt).am, TensorsToStore(ckpt.tensors));
}

SpeakerEncoder LoadSpeakerEncoder(const Checkpoint &ckpt) {
  if (ckpt.stage != "se") throw PreconditionError("expected an 'se' checkpoint, got '" + ckpt.stage + "'");
  return SpeakerEncoder(CheckpointConfig(ckpt).se, TensorsToStore(ckpt.tensors));
}

ConversionModel LoadConversionModel(const Checkpoint &ckpt) {
  if (ckpt.stage != "cm") throw PreconditionError("expected a 'cm' checkpoint, got '" + ckpt.stage + "'");
  ConversionConfig cc = CheckpointConfig(ckpt).cm;
  cc.content_dim = ckpt.metadata.at("content_dim").get<int>();
  cc.speaker_dim = ckpt.metadata.at("speaker_dim").get<int>();
  return ConversionModel(cc, TensorsToStore(ckpt.tensors));
}

FlowVocoder LoadVocoder(const Checkpoint &ckpt) {
  if (ckpt.stage != "voc") throw PreconditionError("expected a 'voc' checkpoint, got '" + ckpt.stage + "'");
  return FlowVocoder(CheckpointConfig(ckpt).voc, TensorsToStore(ckpt.tensors));
}

ContentMode CheckpointMode(const Checkpoint &cm_ckpt) {
  return ParseContentMode(cm_ckpt.metadata.at("mode").get<std::string>());
}

std::optional<std::pair<std::string, RowVector>> SpeakerDependentEmbedding(const Checkpoint &cm_ckpt) {
  const std::string id = CheckpointConfig(cm_ckpt).sd_speaker;
  if (id.empty()) return std::nullopt;
  if (!cm_ckpt.metadata.contains("sd_embedding"))
    throw FormatError("speaker-dependent checkpoint lacks its frozen embedding");
  const auto v = cm_ckpt.metadata.at("sd_embedding").get<std::vector<double>>();
  RowVector e(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) e(static_cast<Eigen::Index>(i)) = v[i];
  return std::make_pair(id, e);
}

AudioClip LoadClipChecked(const fs::path &path, const PipelineConfig &config) {
  AudioClip clip = LoadWav(path);
  if (clip.sample_rate != config.sample_rate)
    throw PreconditionError("'" + path.string() + "' is sampled at " +
                            std::to_string(clip.sample_rate) + " Hz but the config expects " +
                            std::to_string(config.sample_rate) + " Hz (resample it first)");
  return clip;
}

// ---- enrollment

Checkpoint EnrollSpeakers(const PipelineConfig &config, const DatasetManifest &manifest,
                          const Checkpoint &se_ckpt, std::uint64_t seed,
                          const std::optional<std::string> &speaker) {
  const SpeakerEncoder se = LoadSpeakerEncoder(se_ckpt);
  Checkpoint out = NewCheckpoint("enroll", config, seed);
  out.metadata["se_sha256"] = Sha256Hex(SerializeCheckpoint(se_ckpt));
  json speakers = json::object();
  for (const auto &[id, indices] : manifest.BySpeaker()) {
    if (speaker && *speaker != id) continue;
    std::vector<AudioClip> clips;
    for (std::size_t i : indices)
      clips.push_back(TrimSilence(LoadClipChecked(manifest.records[i].audio_path, config), config.trim));
    EnrollmentSet set = EnrollSpeaker(id, clips, se, config.enroll, MixSeed(seed, Fnv1a(id)));
    json segs = json::array();
    for (const auto &s : set.segments)
      segs.push_back({{"utterance", manifest.records[indices[s.clip]].UtteranceId()},
                      {"offset", s.offset}});
    speakers[id] = {{"segments", segs}};
    out.tensors.push_back(ToTensor("spk." + id, set.aggregate));
  }
  if (out.tensors.empty())
    throw PreconditionError(speaker ? "speaker '" + *speaker + "' is not in the manifest"
                                    : std::string("nothing to enroll: empty manifest"));
  out.metadata["speakers"] = speakers;
  return out;
}

RowVector EnrolledEmbedding(const Checkpoint &enrollment, const std::string &speaker) {
  if (!enrollment.Contains("spk." + speaker)) {
    std::string known;
    for (const auto &t : enrollment.tensors) known += (known.empty() ? "" : ", ") + t.name.substr(4);
    throw PreconditionError("unknown target speaker '" + speaker + "' (enrolled: " + known + ")");
  }
  const Matrix m = ToMatrix(enrollment.Get("spk." + speaker));
  RowVector v = m.row(0);
  return v / v.norm();
}

// ---- conversion

VocoderKind ParseVocoderKind(const std::string &name) {
  if (name == "gl") return VocoderKind::kGriffinLim;
  if (name == "flow") return VocoderKind::kFlow;
  throw PreconditionError("unknown vocoder '" + name + "' (expected gl or flow)");
}

ConversionOutput ConvertClip(const PipelineConfig &config, const AcousticModel &am,
                             const ConversionModel &cm, const FlowVocoder *vocoder,
                             const AudioClip &source, const RowVector &speaker, ContentMode mode,
                             VocoderKind kind, std::uint64_t seed) {
  if (source.sample_rate != config.sample_rate)
    throw PreconditionError("source is sampled at " + std::to_string(source.sample_rate) +
                            " Hz but the models expect " + std::to_string(config.sample_rate) +
                            " Hz");
  const int dim = am.config().ContentDim(mode);
  if (dim != cm.config().content_dim)
    throw ShapeError(std::string("content mode '") + ContentModeName(mode) + "' yields " +
                     std::to_string(dim) + "-dim features but the conversion model expects " +
                     std::to_string(cm.config().content_dim));
  if (kind == VocoderKind::kFlow && !vocoder)
    throw PreconditionError("the flow vocoder needs a vocoder checkpoint");

  ConversionOutput out;
  const FrontEndFeatures front = ComputeFrontEnd(TrimSilence(source, config.trim));
  out.content = ExtractPhoneticFeatures(front, mode, am);
  ConversionModel::Conversion conv = cm.Convert(out.content, speaker, MixSeed(seed, 1));
  out.mel = std::move(conv.mel);
  out.alignments = std::move(conv.alignments);
  MelSpectrogram mel;
  mel.values = out.mel;
  mel.sample_rate = config.sample_rate;
  if (kind == VocoderKind::kGriffinLim) {
    out.audio = GriffinLim(mel, {.iterations = config.griffin_lim_iterations});
  } else {
    out.audio = vocoder->Synthesize(mel, vocoder->config().synth_sigma, MixSeed(seed, 2));
  }
  return out;
}

json RunConvertCommand(const ConvertCommand &cmd) {
  const Checkpoint cm_ckpt = LoadCheckpoint(cmd.cm, "cm");
  const Checkpoint am_ckpt = LoadCheckpoint(cmd.am, "am");
  const Checkpoint enrollment = LoadCheckpoint(cmd.enrollment, "enroll");
  const PipelineConfig config = CheckpointConfig(cm_ckpt);
  const ContentMode mode = ParseContentMode(cmd.mode);
  const VocoderKind kind = ParseVocoderKind(cmd.vocoder);
  const AcousticModel am = LoadAcousticModel(am_ckpt);
  const ConversionModel cm = LoadConversionModel(cm_ckpt);
  const ContentMode trained = CheckpointMode(cm_ckpt);
  if (mode != trained)
    throw ShapeError(std::string("mode '") + ContentModeName(mode) + "' yields " +
                     std::to_string(am.config().ContentDim(mode)) +
                     "-dim content but the conversion model was trained on '" +
                     ContentModeName(trained) + "' (" + std::to_string(cm.config().content_dim) +
                     "-dim)");
  RowVector speaker;
  if (const auto sd = SpeakerDependentEmbedding(cm_ckpt)) {
    if (sd->first != cmd.target_speaker)
      throw PreconditionError("the conversion model is speaker-dependent for '" + sd->first +
                              "' and cannot convert to '" + cmd.target_speaker + "'");
    speaker = sd->second;
  } else {
    speaker = EnrolledEmbedding(enrollment, cmd.target_speaker);
  }
  std::optional<Checkpoint> voc_ckpt;
  std::optional<FlowVocoder> vocoder;
  if (kind == VocoderKind::kFlow) {
    if (!cmd.voc) throw PreconditionError("--vocoder flow needs a vocoder checkpoint (--voc)");
    voc_ckpt = LoadCheckpoint(*cmd.voc, "voc");
    vocoder.emplace(LoadVocoder(*voc_ckpt));
  }
  const AudioClip source = LoadClipChecked(cmd.source, config);
  ConversionOutput out = ConvertClip(config, am, cm, vocoder ? &*vocoder : nullptr, source,
                                     speaker, mode, kind, cmd.seed);
  SaveWav(cmd.out, out.audio);

  json sidecar;
  sidecar["source"] = cmd.source.filename().string();
  sidecar["target_speaker"] = cmd.target_speaker;
  sidecar["mode"] = ContentModeName(mode);
  sidecar["vocoder"] = cmd.vocoder;
  sidecar["seed"] = cmd.seed;
  sidecar["content_frames"] = out.content.rows();
  sidecar["mel_frames"] = out.mel.rows();
  sidecar["samples"] = out.audio.samples.size();
  sidecar["sample_rate"] = out.audio.sample_rate;
  sidecar["checkpoints"] = {{"am", FileSha256(cmd.am)},
                            {"cm", FileSha256(cmd.cm)},
                            {"enrollment", FileSha256(cmd.enrollment)},
                            {"voc", cmd.voc && kind == VocoderKind::kFlow ? json(FileSha256(*cmd.voc))
                                                                          : json(nullptr)}};
  WriteFileBytes(cmd.out.string() + ".json", sidecar.dump(2) + "\n");
  return sidecar;
}

// ---- evaluation

namespace {

std::string JoinInts(std::span<const int> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

std::string Format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void DumpMatrix(const fs::path &path, const std::string &name, const Matrix &m) {
  WriteFileBytes(path, TensorToText(ToTensor(name, m)));
}

}  // namespace

nlohmann::ordered_json Evaluate(const EvalInputs &in) {
  if (!in.config || !in.manifest) throw PreconditionError("evaluation needs a config and a manifest");
  const PipelineConfig &cfg = *in.config;
  const DatasetManifest &manifest = *in.manifest;
  nlohmann::ordered_json report;
  json notes = json::array();
  if (in.dump_dir) fs::create_directories(*in.dump_dir / "mel");

  std::vector<AudioClip> raw, trimmed;
  for (const auto &r : manifest.records) {
    raw.push_back(LoadClipChecked(r.audio_path, cfg));
    trimmed.push_back(TrimSilence(raw.back(), cfg.trim));
  }

  // Phoneme error rate over labeled records.
  report["per"] = nullptr;
  if (!in.am) {
    notes.push_back("per: no acoustic model given");
  } else {
    std::size_t edits = 0, ref_len = 0, count = 0;
    std::string dump = "utterance\tpredicted\treference\n";
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const ManifestRecord &r = manifest.records[i];
      if (!r.frame_labels_path) continue;
      const FrameLabels ref = LoadFrameLabels(*r.frame_labels_path);
      const FrameLabels pred = in.am->Decode(StackContext(MfccFromLogMel(ComputeMelSpectrogram(raw[i]).values)));
      if (pred.size() != ref.size())
        throw ShapeError(r.frame_labels_path->string() + ": label count does not match frames");
      const std::vector<int> p = CollapseRepeats(pred), q = CollapseRepeats(ref);
      edits += EditDistance(p, q);
      ref_len += q.size();
      ++count;
      dump += r.UtteranceId() + "\t" + JoinInts(pred) + "\t" + JoinInts(ref) + "\n";
    }
    if (count == 0) {
      notes.push_back("per: no labeled records");
    } else {
      report["per"] = static_cast<double>(edits) / static_cast<double>(ref_len);
      if (in.dump_dir) WriteFileBytes(*in.dump_dir / "per.tsv", dump);
    }
    report["per_utterances"] = count;
  }

  // Enrollment vectors: from the enrollment checkpoint where present, else
  // enrolled from this manifest with the speaker encoder.
  std::map<std::string, RowVector> enrolled;
  for (const std::string &id : manifest.Speakers()) {
    if (in.enrollment && in.enrollment->Contains("spk." + id)) {
      enrolled[id] = EnrolledEmbedding(*in.enrollment, id);
    } else if (in.se) {
      std::vector<AudioClip> clips;
      for (std::size_t i : manifest.BySpeaker().at(id)) clips.push_back(trimmed[i]);
      try {
        enrolled[id] = EnrollSpeaker(id, clips, *in.se, cfg.enroll, MixSeed(in.seed, Fnv1a(id))).aggregate;
        notes.push_back("enrollment: '" + id + "' enrolled from the evaluation utterances");
      } catch (const PreconditionError &e) {
        notes.push_back(std::string("enrollment: ") + e.what());
      }
    }
  }

  // Verification: every test embedding scored against every enrollment
  // vector (EER); utterance-pair cosines give the intra/inter gap.
  report["eer"] = nullptr;
  report["cosine_gap"] = nullptr;
  if (!in.se) {
    notes.push_back("eer: no speaker encoder given");
  } else {
    std::vector<RowVector> emb(manifest.records.size());
    std::vector<bool> has(manifest.records.size(), false);
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
      const Matrix mel = ComputeMelSpectrogram(trimmed[i]).values;
      if (mel.rows() < in.se->config().min_frames) continue;
      emb[i] = in.se->Embed(mel);
      has[i] = true;
    }
    std::vector<double> scores;
    std::vector<bool> same;
    std::string dump = "utterance\tenrolled_speaker\tscore\tsame_speaker\n";
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
      if (!has[i]) continue;
      for (const auto &[id, vec] : enrolled) {
        const double sc = CosineSimilarity(vec, emb[i]);
        const bool k = manifest.records[i].speaker_id == id;
        scores.push_back(sc);
        same.push_back(k);
        dump += manifest.records[i].UtteranceId() + "\t" + id + "\t" + Format(sc) + "\t" +
                (k ? "1" : "0") + "\n";
      }
    }
    if (std::count(same.begin(), same.end(), true) == 0 ||
        std::count(same.begin(), same.end(), false) == 0) {
      notes.push_back("eer: needs genuine and impostor trials (>= 2 enrolled speakers)");
    } else {
      auto flags = std::make_unique<bool[]>(same.size());
      std::copy(same.begin(), same.end(), flags.get());
      report["eer"] = EqualErrorRate(scores, std::span<const bool>(flags.get(), same.size()));
      if (in.dump_dir) WriteFileBytes(*in.dump_dir / "eer_trials.tsv", dump);
    }
    report["eer_trials"] = scores.size();

    double same_sum = 0, diff_sum = 0;
    std::size_t same_n = 0, diff_n = 0;
    std::string pairs_dump = "score\tsame_speaker\n";
    for (std::size_t i = 0; i < trimmed.size(); ++i)
      for (std::size_t j = i + 1; j < trimmed.size(); ++j) {
        if (!has[i] || !has[j]) continue;
        const double sc = CosineSimilarity(emb[i], emb[j]);
        const bool k = manifest.records[i].speaker_id == manifest.records[j].speaker_id;
        (k ? same_sum : diff_sum) += sc;
        ++(k ? same_n : diff_n);
        pairs_dump += Format(sc) + "\t" + (k ? "1" : "0") + "\n";
      }
    if (same_n == 0 || diff_n == 0) {
      notes.push_back("cosine_gap: needs >= 2 speakers and >= 2 utterances of one speaker");
    } else {
      report["cosine_gap"] = same_sum / same_n - diff_sum / diff_n;
      if (in.dump_dir) WriteFileBytes(*in.dump_dir / "cosine_pairs.tsv", pairs_dump);
    }
  }

  // Converter: reconstruction MSEs, window law and per-pair summaries.
  report["teacher_forced_mse"] = nullptr;
  report["free_running_mse"] = nullptr;
  report["attention_window_violations"] = nullptr;
  report["pairs"] = json::array();
  std::map<std::string, RowVector> targets = enrolled;
  if (!in.sd_speaker.empty()) targets = {{in.sd_speaker, in.sd_embedding}};
  if (!in.cm || !in.am) {
    notes.push_back("cm metrics: needs acoustic-model and conversion-model checkpoints");
  } else if (targets.empty()) {
    notes.push_back("cm metrics: no speaker embeddings (give an enrollment or a speaker encoder)");
  } else {
    const ConversionConfig &cc = in.cm->config();
    const int dim = in.am->config().ContentDim(in.mode);
    if (dim != cc.content_dim)
      throw ShapeError("evaluation mode yields " + std::to_string(dim) +
                       "-dim content but the conversion model expects " +
                       std::to_string(cc.content_dim));
    double tf_sum = 0, fr_sum = 0, elems = 0;
    std::size_t violations = 0, steps = 0;
    auto count_violations = [&](const std::vector<AttentionAlignment> &al) {
      for (const auto &a : al) {
        ++steps;
        if (!AlignmentWithinWindow(a, cc.window_left, cc.window_right)) ++violations;
      }
    };
    struct PairStats {
      std::size_t utterances = 0, frames = 0, violations = 0, scored = 0;
      double similarity = 0;
    };
    std::map<std::pair<std::string, std::string>, PairStats> pairs;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const ManifestRecord &r = manifest.records[i];
      const FrontEndFeatures front = ComputeFrontEnd(trimmed[i]);
      const Matrix content = ExtractPhoneticFeatures(front, in.mode, *in.am);
      const std::uint64_t seed = MixSeed(in.seed, Fnv1a(r.UtteranceId()));
      auto own = targets.find(r.speaker_id);
      if (own != targets.end()) {
        ad::Tape tape(false);
        auto tf = in.cm->TeacherForced(tape, content, own->second, front.log_mel, seed);
        const Matrix tf_mel = in.cm->DenormalizeMel(tf.post.value());
        count_violations(tf.alignments);
        const ConversionModel::Conversion fr = in.cm->Convert(content, own->second, seed);
        count_violations(fr.alignments);
        tf_sum += (tf_mel - front.log_mel).squaredNorm();
        fr_sum += (fr.mel - front.log_mel).squaredNorm();
        elems += static_cast<double>(front.log_mel.size());
        if (in.dump_dir) {
          const fs::path base = *in.dump_dir / "mel" / r.UtteranceId();
          DumpMatrix(base.string() + ".target.txt", "target", front.log_mel);
          DumpMatrix(base.string() + ".tf.txt", "teacher_forced", tf_mel);
          DumpMatrix(base.string() + ".fr.txt", "free_running", fr.mel);
        }
      }
      for (const auto &[spk, emb] : targets) {
        const ConversionModel::Conversion conv = in.cm->Convert(content, emb, seed);
        PairStats &p = pairs[{r.language_tag, spk}];
        ++p.utterances;
        p.frames += static_cast<std::size_t>(conv.mel.rows());
        for (const auto &a : conv.alignments)
          if (!AlignmentWithinWindow(a, cc.window_left, cc.window_right)) ++p.violations;
        if (in.se && conv.mel.rows() >= in.se->config().min_frames) {
          p.similarity += CosineSimilarity(in.se->Embed(conv.mel), emb);
          ++p.scored;
        }
      }
    }
    if (elems > 0) {
      report["teacher_forced_mse"] = tf_sum / elems;
      report["free_running_mse"] = fr_sum / elems;
    } else {
      notes.push_back("cm mse: no evaluation speaker has an embedding");
    }
    for (const auto &[key, p] : pairs) {
      violations += p.violations;
      nlohmann::ordered_json row;
      row["source_language"] = key.first;
      row["target_speaker"] = key.second;
      row["utterances"] = p.utterances;
      row["frames"] = p.frames;
      row["attention_window_violations"] = p.violations;
      row["speaker_similarity"] = p.scored ? json(p.similarity / p.scored) : json(nullptr);
      report["pairs"].push_back(row);
    }
    report["attention_window_violations"] = violations;
    report["attention_steps"] = steps;
  }
  report["notes"] = notes;
  for (const auto &[key, value] : report.items())
    if (value.is_number_float() && !std::isfinite(value.get<double>()))
      throw NumericError("evaluation metric '" + key + "' is not finite");
  return report;
}

nlohmann::ordered_json RunEvaluateCommand(const EvaluateCommand &cmd) {
  const PipelineConfig config = LoadConfig(cmd.config);
  const DatasetManifest manifest = LoadManifest(cmd.manifest);
  std::optional<AcousticModel> am;
  std::optional<SpeakerEncoder> se;
  std::optional<ConversionModel> cm;
  std::optional<Checkpoint> enrollment;
  std::optional<std::pair<std::string, RowVector>> sd;
  ContentMode mode = config.mode;
  if (cmd.am) am.emplace(LoadAcousticModel(LoadCheckpoint(*cmd.am, "am")));
  if (cmd.se) se.emplace(LoadSpeakerEncoder(LoadCheckpoint(*cmd.se, "se")));
  if (cmd.cm) {
    const Checkpoint ckpt = LoadCheckpoint(*cmd.cm, "cm");
    mode = CheckpointMode(ckpt);
    cm.emplace(LoadConversionModel(ckpt));
    sd = SpeakerDependentEmbedding(ckpt);
  }
  if (cmd.enrollment) enrollment = LoadCheckpoint(*cmd.enrollment, "enroll");
  EvalInputs in;
  if (sd) {
    in.sd_speaker = sd->first;
    in.sd_embedding = sd->second;
  }
  in.config = &config;
  in.manifest = &manifest;
  in.am = am ? &*am : nullptr;
  in.se = se ? &*se : nullptr;
  in.cm = cm ? &*cm : nullptr;
  in.enrollment = enrollment ? &*enrollment : nullptr;
  in.mode = mode;
  in.seed = cmd.seed;
  in.dump_dir = cmd.dump_dir;
  nlohmann::ordered_json report = Evaluate(in);
  WriteFileBytes(cmd.out, report.dump(2) + "\n");
  return report;
}

void RunFeaturesCommand(const fs::path &config_path, const fs::path &manifest_path,
                        const fs::path &out_dir) {
  const PipelineConfig config = LoadConfig(config_path);
  const DatasetManifest manifest = LoadManifest(manifest_path);
  fs::create_directories(out_dir);
  for (const auto &r : manifest.records) {
    const FrontEndFeatures f = ComputeFrontEnd(LoadClipChecked(r.audio_path, config));
    Checkpoint c;
    c.stage = "features";
    c.metadata = {{"utterance", r.UtteranceId()},
                  {"speaker_id", r.speaker_id},
                  {"language_tag", r.language_tag},
                  {"frames", f.log_mel.rows()}};
    c.tensors = {ToTensor("log_mel", f.log_mel), ToTensor("context_mfcc", f.context_mfcc),
                 ToTensor("prosody", f.prosody)};
    SaveCheckpoint(out_dir / (r.UtteranceId() + ".feat"), c);
  }
}

}  // namespace clvc
