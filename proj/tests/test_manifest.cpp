// test_manifest.cpp

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

#include <fstream>

#include "clvc/audio.hpp"
#include "clvc/checkpoint.hpp"
#include "clvc/manifest.hpp"
#include "test_util.hpp"

using namespace clvc;
namespace fs = std::filesystem;

namespace {

fs::path MakeWavs(const std::string &name, int count) {
  const fs::path dir = testing::ScratchDir(name);
  fs::create_directories(dir / "wav");
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(1000, 0.1f);
  for (int i = 0; i < count; ++i) SaveWav(dir / "wav" / ("u" + std::to_string(i) + ".wav"), clip);
  return dir;
}

}  // namespace

TEST_CASE("empty manifest warns") {
  const fs::path dir = testing::ScratchDir("manifest_empty");
  WriteFileBytes(dir / "m.jsonl", "");
  DatasetManifest m = LoadManifest(dir / "m.jsonl");
  CHECK(m.records.empty());
  CHECK(m.warnings.size() == 1);
}

TEST_CASE("relative paths resolve against the manifest directory") {
  const fs::path dir = MakeWavs("manifest_rel", 2);
  WriteFileBytes(dir / "m.jsonl",
                 "{\"audio_path\": \"wav/u0.wav\", \"speaker_id\": \"a\", \"language_tag\": \"en\"}\n"
                 "\n"
                 "{\"audio_path\": \"wav/u1.wav\", \"speaker_id\": \"b\", \"language_tag\": \"fi\"}\n");
  DatasetManifest m = LoadManifest(dir / "m.jsonl");
  REQUIRE(m.records.size() == 2);
  CHECK(fs::exists(m.records[0].audio_path));
  CHECK(m.records[1].UtteranceId() == "u1");
  CHECK(m.Speakers() == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(m.records[0].frame_labels_path.has_value());
}

TEST_CASE("a missing speaker_id names the line") {
  const fs::path dir = MakeWavs("manifest_missing", 2);
  const std::string text =
      "{\"audio_path\": \"wav/u0.wav\", \"speaker_id\": \"a\", \"language_tag\": \"en\"}\n"
      "{\"audio_path\": \"wav/u1.wav\", \"language_tag\": \"en\"}\n";
  CHECK_THROWS_WITH_AS(ParseManifest(text, dir, "m.jsonl"),
                       doctest::Contains("m.jsonl:2"), FormatError);
  CHECK_THROWS_WITH_AS(ParseManifest(text, dir, "m.jsonl"), doctest::Contains("speaker_id"),
                       FormatError);
  CHECK_THROWS_AS(ParseManifest("{not json\n", dir), FormatError);
  CHECK_THROWS_AS(ParseManifest("{\"audio_path\": 3, \"speaker_id\": \"a\", \"language_tag\": \"en\"}\n", dir),
                  FormatError);
}

TEST_CASE("dangling paths and duplicates are rejected") {
  const fs::path dir = MakeWavs("manifest_bad", 1);
  CHECK_THROWS_AS(ParseManifest("{\"audio_path\": \"wav/nope.wav\", \"speaker_id\": \"a\", \"language_tag\": \"en\"}\n", dir),
                  PreconditionError);
  const std::string dup =
      "{\"audio_path\": \"wav/u0.wav\", \"speaker_id\": \"a\", \"language_tag\": \"en\"}\n"
      "{\"audio_path\": \"./wav/u0.wav\", \"speaker_id\": \"a\", \"language_tag\": \"en\"}\n";
  CHECK_THROWS_AS(ParseManifest(dup, dir), PreconditionError);
}

TEST_CASE("save / load of 1000 records is idempotent") {
  const fs::path dir = MakeWavs("manifest_big", 1000);
  DatasetManifest m;
  for (int i = 0; i < 1000; ++i) {
    ManifestRecord r;
    r.audio_path = dir / "wav" / ("u" + std::to_string(i) + ".wav");
    r.speaker_id = "s" + std::to_string(i % 7);
    r.language_tag = i % 2 ? "en" : "fi";
    if (i % 3 == 0) {
      r.frame_labels_path = dir / ("u" + std::to_string(i) + ".lab");
      SaveFrameLabels(*r.frame_labels_path, FrameLabels(30, i % 5));
    }
    m.records.push_back(r);
  }
  SaveManifest(dir / "a.jsonl", m);
  DatasetManifest back = LoadManifest(dir / "a.jsonl");
  REQUIRE(back.records.size() == 1000);
  SaveManifest(dir / "b.jsonl", back);
  CHECK(ReadFileBytes(dir / "a.jsonl") == ReadFileBytes(dir / "b.jsonl"));
  CHECK(back.records[999].speaker_id == "s5");
  CHECK(LoadFrameLabels(*back.records[3].frame_labels_path) == FrameLabels(30, 3));
  CHECK(back.BySpeaker().at("s0").size() == 143);
}

TEST_CASE("frame label files") {
  const fs::path dir = testing::ScratchDir("labels");
  FrameLabels l = {0, 1, 2, 69};
  SaveFrameLabels(dir / "x.lab", l);
  CHECK(LoadFrameLabels(dir / "x.lab") == l);
  WriteFileBytes(dir / "bad.lab", "1 2 x");
  CHECK_THROWS_AS(LoadFrameLabels(dir / "bad.lab"), FormatError);
  WriteFileBytes(dir / "neg.lab", "1 -2");
  CHECK_THROWS_AS(LoadFrameLabels(dir / "neg.lab"), FormatError);
}
