// manifest.cpp

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

#include "clvc/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "clvc/checkpoint.hpp"

namespace clvc {

namespace fs = std::filesystem;

std::vector<std::string> DatasetManifest::Speakers() const {
  std::set<std::string> s;
  for (const auto &r : records) s.insert(r.speaker_id);
  return {s.begin(), s.end()};
}

std::map<std::string, std::vector<std::size_t>> DatasetManifest::BySpeaker() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) out[records[i].speaker_id].push_back(i);
  return out;
}

namespace {

std::string RequireString(const nlohmann::json &obj, const char *key, const std::string &where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null())
    throw FormatError(where + ": record is missing '" + key + "'");
  if (!it->is_string()) throw FormatError(where + ": '" + key + "' must be a string");
  std::string value = it->get<std::string>();
  if (value.empty()) throw FormatError(where + ": '" + key + "' is empty");
  return value;
}

fs::path Resolve(const fs::path &base, const std::string &p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

DatasetManifest ParseManifest(const std::string &text, const fs::path &base_dir,
                              const std::string &source_name) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw FormatError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw FormatError(where + ": record must be a JSON object");
    ManifestRecord r;
    r.audio_path = Resolve(base_dir, RequireString(obj, "audio_path", where));
    r.speaker_id = RequireString(obj, "speaker_id", where);
    r.language_tag = RequireString(obj, "language_tag", where);
    if (obj.contains("frame_labels_path") && !obj["frame_labels_path"].is_null())
      r.frame_labels_path = Resolve(base_dir, RequireString(obj, "frame_labels_path", where));
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) m.warnings.push_back(source_name + ": manifest is empty");
  ValidateManifest(m);
  return m;
}

void ValidateManifest(const DatasetManifest &manifest) {
  std::set<fs::path> seen;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ManifestRecord &r = manifest.records[i];
    const std::string where = "record " + std::to_string(i + 1);
    if (r.speaker_id.empty()) throw FormatError(where + ": empty speaker_id");
    if (!fs::is_regular_file(r.audio_path))
      throw PreconditionError(where + ": audio file '" + r.audio_path.string() +
                              "' does not exist");
    if (r.frame_labels_path && !fs::is_regular_file(*r.frame_labels_path))
      throw PreconditionError(where + ": label file '" + r.frame_labels_path->string() +
                              "' does not exist");
    if (!seen.insert(fs::weakly_canonical(r.audio_path)).second)
      throw PreconditionError(where + ": duplicate audio path '" + r.audio_path.string() + "'");
  }
}

DatasetManifest LoadManifest(const fs::path &path) {
  if (!fs::is_regular_file(path))
    throw PreconditionError("manifest '" + path.string() + "' does not exist");
  return ParseManifest(ReadFileBytes(path), path.parent_path(), path.string());
}

void SaveManifest(const fs::path &path, const DatasetManifest &manifest) {
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto rel = [&base](const fs::path &p) {
    fs::path r = p.lexically_relative(base);
    return (r.empty() ? p : r).generic_string();
  };
  std::string out;
  for (const auto &r : manifest.records) {
    nlohmann::ordered_json obj;
    obj["audio_path"] = rel(r.audio_path);
    obj["speaker_id"] = r.speaker_id;
    obj["language_tag"] = r.language_tag;
    if (r.frame_labels_path) obj["frame_labels_path"] = rel(*r.frame_labels_path);
    out += obj.dump() + "\n";
  }
  WriteFileBytes(path, out);
}

FrameLabels LoadFrameLabels(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open label file '" + path.string() + "'");
  FrameLabels labels;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != tok.size() || v < 0)
      throw FormatError(path.string() + ": bad label '" + tok + "'");
    labels.push_back(v);
  }
  return labels;
}

void SaveFrameLabels(const fs::path &path, const FrameLabels &labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += std::to_string(labels[i]) + ((i + 1) % 25 == 0 || i + 1 == labels.size() ? "\n" : " ");
  WriteFileBytes(path, out);
}

}  // namespace clvc
