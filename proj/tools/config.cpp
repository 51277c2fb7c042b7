#include "config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ki67/version.hpp"

namespace ki67::cli {

namespace {

json vec(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 to_vec(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::Usage, key + " must be an array of 3 numbers");
  Vec3 v{};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) fail(ErrorKind::Usage, key + " must be an array of 3 numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

bool compatible(const json& base, const json& value) {
  if (base.is_number_float()) return value.is_number();
  if (base.is_number_unsigned()) return value.is_number_unsigned();
  if (base.is_number_integer()) return value.is_number_integer();
  if (base.is_array()) return value.is_array();
  return base.type() == value.type();
}

void merge_into(json& base, const json& file, const std::string& prefix) {
  if (!file.is_object()) fail(ErrorKind::Usage, "config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : file.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) fail(ErrorKind::Usage, "unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, path);
    } else if (!compatible(slot, value)) {
      fail(ErrorKind::Usage, "config key '" + path + "' has the wrong type");
    } else {
      slot = value;
    }
  }
}

}  // namespace

json default_config() {
  const PipelineConfig d;
  json j;
  j["postproc"] = {{"window", d.postproc.window},
                   {"offset", d.postproc.offset},
                   {"open_radius", d.postproc.open_radius},
                   {"min_area", d.postproc.min_area}};
  j["separation"] = {{"kernel_a", d.separation.kernel_a},
                     {"kernel_b", d.separation.kernel_b},
                     {"contour_min", d.separation.contour_min},
                     {"dilate_radius", d.separation.dilate_radius},
                     {"splitter", std::string(to_string(d.separation.splitter))},
                     {"dtw_h", d.separation.dtw_h},
                     {"gmm_single_area", d.separation.gmm_single_area},
                     {"seed", d.separation.seed}};
  j["classifier"] = {{"kind", d.classifier},
                     {"model", d.classifier_model},
                     {"hematoxylin", vec(d.hematoxylin)},
                     {"dab", vec(d.dab)}};
  j["overlap_model"] = d.overlap_model;
  j["synth"] = {{"width", d.synth.width},
                {"height", d.synth.height},
                {"n_nuclei", d.synth.n_nuclei},
                {"positive_fraction", d.synth.positive_fraction},
                {"radius_min", d.synth.radius_min},
                {"radius_max", d.synth.radius_max},
                {"overlap_fraction", d.synth.overlap_fraction},
                {"max_pair_overlap", d.synth.max_pair_overlap},
                {"stain_noise_sd", d.synth.stain_noise_sd},
                {"seed", d.synth.seed}};
  j["gbdt"] = {{"n_trees", d.gbdt.n_trees},
               {"max_depth", d.gbdt.max_depth},
               {"learning_rate", d.gbdt.learning_rate},
               {"min_leaf", d.gbdt.min_leaf},
               {"subsample", d.gbdt.subsample},
               {"seed", d.gbdt.seed}};
  j["rf"] = {{"n_trees", d.rf.n_trees},
             {"max_depth", d.rf.max_depth},
             {"min_leaf", d.rf.min_leaf},
             {"mtry", d.rf.mtry},
             {"bootstrap", d.rf.bootstrap},
             {"seed", d.rf.seed}};
  j["threads"] = d.threads;
  return j;
}

json merge_config(const json& base, const json& file) {
  json out = base;
  merge_into(out, file, "");
  return out;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Input, "cannot open config " + path.string());
  json file;
  try {
    file = json::parse(is);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Usage, "config " + path.string() + ": " + e.what());
  }
  return merge_config(default_config(), file);
}

PipelineConfig parse_config(const json& doc) {
  PipelineConfig c;
  try {
    const auto& pp = doc.at("postproc");
    c.postproc.window = pp.at("window").get<int>();
    c.postproc.offset = pp.at("offset").get<double>();
    c.postproc.open_radius = pp.at("open_radius").get<int>();
    c.postproc.min_area = pp.at("min_area").get<int>();

    const auto& sp = doc.at("separation");
    c.separation.kernel_a = sp.at("kernel_a").get<int>();
    c.separation.kernel_b = sp.at("kernel_b").get<int>();
    c.separation.contour_min = sp.at("contour_min").get<int>();
    c.separation.dilate_radius = sp.at("dilate_radius").get<int>();
    c.separation.splitter = parse_splitter(sp.at("splitter").get<std::string>());
    c.separation.dtw_h = sp.at("dtw_h").get<double>();
    c.separation.gmm_single_area = sp.at("gmm_single_area").get<double>();
    c.separation.seed = sp.at("seed").get<std::uint64_t>();

    const auto& cl = doc.at("classifier");
    c.classifier = cl.at("kind").get<std::string>();
    c.classifier_model = cl.at("model").get<std::string>();
    c.hematoxylin = to_vec(cl.at("hematoxylin"), "classifier.hematoxylin");
    c.dab = to_vec(cl.at("dab"), "classifier.dab");
    c.overlap_model = doc.at("overlap_model").get<std::string>();

    const auto& sy = doc.at("synth");
    c.synth.width = sy.at("width").get<int>();
    c.synth.height = sy.at("height").get<int>();
    c.synth.n_nuclei = sy.at("n_nuclei").get<int>();
    c.synth.positive_fraction = sy.at("positive_fraction").get<double>();
    c.synth.radius_min = sy.at("radius_min").get<double>();
    c.synth.radius_max = sy.at("radius_max").get<double>();
    c.synth.overlap_fraction = sy.at("overlap_fraction").get<double>();
    c.synth.max_pair_overlap = sy.at("max_pair_overlap").get<double>();
    c.synth.stain_noise_sd = sy.at("stain_noise_sd").get<double>();
    c.synth.seed = sy.at("seed").get<std::uint64_t>();

    const auto& gb = doc.at("gbdt");
    c.gbdt.n_trees = gb.at("n_trees").get<int>();
    c.gbdt.max_depth = gb.at("max_depth").get<int>();
    c.gbdt.learning_rate = gb.at("learning_rate").get<double>();
    c.gbdt.min_leaf = gb.at("min_leaf").get<int>();
    c.gbdt.subsample = gb.at("subsample").get<double>();
    c.gbdt.seed = gb.at("seed").get<std::uint64_t>();

    const auto& rf = doc.at("rf");
    c.rf.n_trees = rf.at("n_trees").get<int>();
    c.rf.max_depth = rf.at("max_depth").get<int>();
    c.rf.min_leaf = rf.at("min_leaf").get<int>();
    c.rf.mtry = rf.at("mtry").get<int>();
    c.rf.bootstrap = rf.at("bootstrap").get<bool>();
    c.rf.seed = rf.at("seed").get<std::uint64_t>();

    c.threads = doc.at("threads").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Usage, std::string("config: ") + e.what());
  }
  if (c.classifier != "baseline" && c.classifier != "rf") {
    fail(ErrorKind::Usage, "classifier.kind must be 'baseline' or 'rf'");
  }
  if (c.threads < 0) fail(ErrorKind::Usage, "threads must be >= 0");
  c.postproc.validate();
  c.separation.validate();
  c.synth.validate();
  c.gbdt.validate();
  c.rf.validate();
  return c;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const json& doc) { return fnv1a_hex(doc.dump()); }

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "missing";
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a_hex(ss.str());
}

void write_run_manifest(const RunManifest& m, const std::filesystem::path& dir) {
  json j;
  j["tool"] = "ki67";
  j["version"] = kVersion;
  j["formats"] = {{"gbdt_model", GbdtModel::kVersion}, {"rf_model", RfModel::kVersion}};
  j["command"] = m.command;
  j["config_hash"] = config_hash(m.config);
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  j["inputs"] = json::array();
  for (const auto& p : m.inputs) {
    j["inputs"].push_back({{"path", p.generic_string()}, {"fnv1a", file_hash(p)}});
  }
  j["outputs"] = json::array();
  for (const auto& p : m.outputs) {
    j["outputs"].push_back({{"path", p.generic_string()}, {"fnv1a", file_hash(p)}});
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream os(dir / "run_manifest.json");
  if (!os) fail(ErrorKind::Input, "cannot write run manifest in " + dir.string());
  os << j.dump(2) << '\n';
}

}  // namespace ki67::cli
