// clvc/manifest.hpp

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

// JSON Lines dataset manifests. One object per line:
//
//   {"audio_path": "...", "speaker_id": "...", "language_tag": "...",
//    "frame_labels_path": "..."}            (the last key is optional)
//
// Relative paths are resolved against the manifest's directory. Blank
// lines are skipped.

#ifndef CLVC_MANIFEST_HPP_
#define CLVC_MANIFEST_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clvc/acoustic_model.hpp"

namespace clvc {

struct ManifestRecord {
  std::filesystem::path audio_path;
  std::string speaker_id;
  std::string language_tag;
  std::optional<std::filesystem::path> frame_labels_path;

  // Stable utterance key: the audio file stem.
  std::string UtteranceId() const { return audio_path.stem().string(); }
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> warnings;

  std::vector<std::string> Speakers() const;  // sorted, unique
  std::map<std::string, std::vector<std::size_t>> BySpeaker() const;
};

// Throws FormatError ("<path>:<line>: ...") on malformed lines or missing
// fields, PreconditionError on unresolvable paths or duplicate audio paths.
// An empty file yields an empty manifest with a warning.
DatasetManifest LoadManifest(const std::filesystem::path &path);
DatasetManifest ParseManifest(const std::string &text, const std::filesystem::path &base_dir,
                              const std::string &source_name = "manifest");
// Re-runs the path and duplicate checks on an in-memory manifest.
void ValidateManifest(const DatasetManifest &manifest);

// Writes paths relative to the manifest's directory when possible.
void SaveManifest(const std::filesystem::path &path, const DatasetManifest &manifest);

// Whitespace-separated integer labels, one per frame.
FrameLabels LoadFrameLabels(const std::filesystem::path &path);
void SaveFrameLabels(const std::filesystem::path &path, const FrameLabels &labels);

}  // namespace clvc

#endif  // CLVC_MANIFEST_HPP_
