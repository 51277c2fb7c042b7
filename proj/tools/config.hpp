#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ki67/classify.hpp"
#include "ki67/forest.hpp"
#include "ki67/gbdt.hpp"
#include "ki67/postproc.hpp"
#include "ki67/separate.hpp"
#include "ki67/synth.hpp"

namespace ki67::cli {

using nlohmann::json;

struct PipelineConfig {
  PostprocParams postproc;
  SeparationParams separation;
  std::string classifier = "baseline";  // "baseline" or "rf"
  std::string classifier_model;         // RF model path when classifier == "rf"
  Vec3 hematoxylin{0.650, 0.704, 0.286};
  Vec3 dab{0.269, 0.568, 0.778};
  std::string overlap_model;
  SynthConfig synth;
  GbdtParams gbdt;
  RfParams rf;
  int threads = 0;  // 0 = OpenMP default

  StainVectors stains() const { return StainVectors::from(hematoxylin, dab); }
};

// Every key with its default value; the config file may set any subset.
json default_config();

// Overlays `file` onto the defaults. Unknown keys and wrongly typed values
// are usage errors that name the offending key.
json merge_config(const json& base, const json& file);

json load_config_file(const std::filesystem::path& path);

PipelineConfig parse_config(const json& doc);

// FNV-1a 64 of the compact JSON dump, as 16 hex digits.
std::string config_hash(const json& doc);

std::string fnv1a_hex(const std::string& bytes);

// Hash of a file's bytes, or "missing".
std::string file_hash(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  json config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  json seeds = json::object();
};

// Writes run_manifest.json into `dir`. No timestamps or thread counts, so
// reruns produce the same bytes.
void write_run_manifest(const RunManifest& m, const std::filesystem::path& dir);

}  // namespace ki67::cli
