#include "commands.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "config.hpp"
#include "csv.hpp"
#include "ki67/datasets.hpp"
#include "ki67/geojson.hpp"
#include "ki67/metrics.hpp"
#include "ki67/pipeline.hpp"
#include "ki67/version.hpp"

namespace ki67::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) { return detail::format_double(v); }

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

// Flags that override config keys. Values are kept as text and converted to
// the type of the key they replace.
class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& pointer,
           const std::string& help) {
    auto& slot = slots_.emplace_back();
    slot.pointer = pointer;
    slot.flag = flag;
    slot.option = app->add_option(flag, slot.value, help);
  }

  json apply(const json& doc) const {
    json patch = json::object();
    for (const auto& s : slots_) {
      if (s.option->count() == 0) continue;
      const json::json_pointer ptr(s.pointer);
      patch[ptr] = convert(doc.at(ptr), s.value, s.flag);
    }
    return merge_config(doc, patch);
  }

 private:
  struct Slot {
    std::string pointer;
    std::string flag;
    std::string value;
    CLI::Option* option = nullptr;
  };

  static json convert(const json& like, const std::string& text, const std::string& flag) {
    try {
      std::size_t used = 0;
      if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
      } else if (like.is_number_unsigned()) {
        if (!text.empty() && text[0] != '-') {
          const auto v = std::stoull(text, &used);
          if (used == text.size()) return v;
        }
      } else if (like.is_number_integer()) {
        const auto v = std::stoll(text, &used);
        if (used == text.size()) return v;
      } else if (like.is_number_float()) {
        const auto v = std::stod(text, &used);
        if (used == text.size()) return v;
      } else if (like.is_string()) {
        return text;
      }
    } catch (const std::exception&) {
    }
    fail(ErrorKind::Usage, "invalid value '" + text + "' for " + flag);
  }

  std::deque<Slot> slots_;
};

struct Context {
  json doc;
  PipelineConfig cfg;
  RunManifest manifest;
};

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  int threads = -1;
  Overrides overrides;
  std::function<void(Context&)> run;
};

void add_postproc_flags(Command& c) {
  auto* a = c.app;
  c.overrides.add(a, "--window", "/postproc/window", "Local-mean window (odd)");
  c.overrides.add(a, "--offset", "/postproc/offset", "Threshold offset");
  c.overrides.add(a, "--open-radius", "/postproc/open_radius", "Opening disc radius");
  c.overrides.add(a, "--min-area", "/postproc/min_area", "Smallest kept component");
}

void add_separation_flags(Command& c) {
  auto* a = c.app;
  c.overrides.add(a, "--splitter", "/separation/splitter", "proposed, dtw, gmm or none");
  c.overrides.add(a, "--kernel-a", "/separation/kernel_a", "Erosion kernel semi-axis x");
  c.overrides.add(a, "--kernel-b", "/separation/kernel_b", "Erosion kernel semi-axis y");
  c.overrides.add(a, "--contour-min", "/separation/contour_min", "Minimum contour points");
  c.overrides.add(a, "--dilate-radius", "/separation/dilate_radius", "Seed dilation radius");
  c.overrides.add(a, "--dtw-h", "/separation/dtw_h", "h-maxima depth");
  c.overrides.add(a, "--gmm-single-area", "/separation/gmm_single_area",
                  "Single-nucleus area for GMM (0 = median)");
  c.overrides.add(a, "--separation-seed", "/separation/seed", "GMM seed");
  c.overrides.add(a, "--overlap-model", "/overlap_model", "Overlap detector model");
}

void add_classifier_flags(Command& c) {
  auto* a = c.app;
  c.overrides.add(a, "--classifier", "/classifier/kind", "baseline or rf");
  c.overrides.add(a, "--classifier-model", "/classifier/model", "RF model path");
}

void add_synth_flags(Command& c) {
  auto* a = c.app;
  c.overrides.add(a, "--width", "/synth/width", "Image width");
  c.overrides.add(a, "--height", "/synth/height", "Image height");
  c.overrides.add(a, "--n-nuclei", "/synth/n_nuclei", "Nuclei per image");
  c.overrides.add(a, "--positive-fraction", "/synth/positive_fraction", "Positive fraction");
  c.overrides.add(a, "--radius-min", "/synth/radius_min", "Smallest semi-axis");
  c.overrides.add(a, "--radius-max", "/synth/radius_max", "Largest semi-axis");
  c.overrides.add(a, "--overlap-fraction", "/synth/overlap_fraction",
                  "Fraction of components holding two nuclei");
  c.overrides.add(a, "--max-pair-overlap", "/synth/max_pair_overlap", "Pair IoU cap");
  c.overrides.add(a, "--stain-noise-sd", "/synth/stain_noise_sd", "OD noise sd");
  c.overrides.add(a, "--seed", "/synth/seed", "Master seed");
}

fs::path manifest_dir_for(const fs::path& file) {
  const auto parent = file.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Input, "cannot create " + dir.string());
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) fail(ErrorKind::Input, "missing input: " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Input, "cannot write " + path.string());
  return os;
}

// Detector plus the model it closes over.
struct Detector {
  std::shared_ptr<GbdtModel> model;
  OverlapDetector fn;
};

Detector make_detector(Context& ctx) {
  Detector d;
  const auto& path = ctx.cfg.overlap_model;
  if (path.empty()) {
    if (ctx.cfg.separation.splitter != Splitter::None) {
      fail(ErrorKind::Usage, "an overlap model is required (--overlap-model)");
    }
    d.fn = [](const Region&, const FeatureVector&) { return 0.0; };
    return d;
  }
  require_file(path);
  d.model = std::make_shared<GbdtModel>(gbdt_load(path));
  if (d.model->n_features() != FeatureVector::kSize) {
    fail(ErrorKind::Model, "overlap detector must use the 8 region features: " + path);
  }
  ctx.manifest.inputs.push_back(path);
  auto model = d.model;
  d.fn = [model](const Region&, const FeatureVector& f) { return gbdt_predict(*model, f); };
  return d;
}

std::unique_ptr<NucleusClassifier> make_classifier(Context& ctx) {
  const auto stains = ctx.cfg.stains();
  if (ctx.cfg.classifier == "baseline") return std::make_unique<StainBaselineClassifier>(stains);
  const auto& path = ctx.cfg.classifier_model;
  if (path.empty()) fail(ErrorKind::Usage, "classifier 'rf' needs --classifier-model");
  require_file(path);
  ctx.manifest.inputs.push_back(path);
  return std::make_unique<ForestClassifier>(rf_load(path),
                                            std::make_shared<HandcraftedFeatures>(stains));
}

// Positive contours red, negative green, on a copy of the input.
RasterImage render_overlay(const RasterImage& rgb, const LabelMap& labels,
                           const std::vector<NucleusRecord>& nuclei) {
  RasterImage out = rgb;
  if (out.bit_depth != 8 || out.channels != 3) fail(ErrorKind::Input, "overlay needs 8-bit RGB");
  std::vector<NucleusClass> cls(static_cast<std::size_t>(max_label(labels)) + 1,
                                NucleusClass::Negative);
  for (const auto& n : nuclei) cls[n.label] = n.cls;
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const int l = labels(x, y);
      if (l == 0) continue;
      bool edge = false;
      const int dx[] = {1, -1, 0, 0};
      const int dy[] = {0, 0, 1, -1};
      for (int k = 0; k < 4 && !edge; ++k) {
        const int nx = x + dx[k];
        const int ny = y + dy[k];
        edge = !labels.contains(nx, ny) || labels(nx, ny) != l;
      }
      if (!edge) continue;
      const bool pos = cls[l] == NucleusClass::Positive;
      out.at(x, y, 0) = pos ? 255 : 0;
      out.at(x, y, 1) = pos ? 0 : 255;
      out.at(x, y, 2) = 0;
    }
  }
  return out;
}

void write_nuclei_csv(const std::vector<NucleusRecord>& nuclei, const fs::path& path) {
  auto os = open_out(path);
  os << "label,centroid_x,centroid_y,area,class,confidence\n";
  for (const auto& n : nuclei) {
    os << n.label << ',' << fmt(n.centroid_x) << ',' << fmt(n.centroid_y) << ',' << n.area << ','
       << to_string(n.cls) << ',' << fmt(n.confidence) << '\n';
  }
}

std::vector<NucleusRecord> read_nuclei_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const int cl = require_column(t, "label", path);
  const int cc = require_column(t, "class", path);
  const int cf = t.column("confidence");
  std::vector<NucleusRecord> out;
  for (const auto& row : t.rows) {
    NucleusRecord r;
    try {
      r.label = std::stoi(row[cl]);
      if (cf >= 0 && !row[cf].empty()) r.confidence = std::stod(row[cf]);
    } catch (const std::exception&) {
      fail(ErrorKind::Input, path.string() + ": malformed number");
    }
    std::string c = row[cc];
    for (auto& ch : c) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (c == "positive") {
      r.cls = NucleusClass::Positive;
    } else if (c == "negative") {
      r.cls = NucleusClass::Negative;
    } else {
      fail(ErrorKind::Input, path.string() + ": unknown class '" + row[cc] + "'");
    }
    out.push_back(r);
  }
  return out;
}

void write_regions_csv(const SeparationResult& res, const fs::path& path) {
  auto os = open_out(path);
  os << "label,n_seeds,split_applied,detector_probability\n";
  for (const auto& r : res.regions) {
    os << r.label << ',' << r.n_seeds << ',' << (r.split_applied ? 1 : 0) << ','
       << fmt(r.detector_probability) << '\n';
  }
}

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Input, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Runs fn(i) for every item in parallel; rethrows the first failure in item
// order after all items have finished.
void for_each_item(std::size_t n, const std::function<void(std::size_t)>& fn,
                   const std::function<std::string(std::size_t)>& name) {
  std::vector<std::optional<Error>> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (const Error& e) {
      errors[i] = e;
    } catch (const std::exception& e) {
      errors[i] = Error(ErrorKind::Processing, e.what());
    }
  }
  std::optional<Error> first;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    if (first) {
      std::cerr << "error: " << name(i) << ": " << errors[i]->what() << '\n';
    } else {
      first = Error(errors[i]->kind(), name(i) + ": " + errors[i]->what());
    }
  }
  if (first) throw *first;
}

// ---------------------------------------------------------------- commands

void setup_synth(Command& c) {
  auto out = std::make_shared<std::string>();
  auto n = std::make_shared<int>(1);
  c.app->add_option("--out", *out, "Output directory")->required();
  c.app->add_option("--n-images", *n, "Number of images")->check(CLI::NonNegativeNumber);
  add_synth_flags(c);
  c.run = [out, n](Context& ctx) {
    const fs::path dir(*out);
    const auto rows = export_dataset(ctx.cfg.synth, *n, dir);
    json seeds = json::array();
    for (const auto& r : rows) {
      seeds.push_back(r.seed);
      for (const char* suffix : {".png", "_prob.png", "_labels.png", "_truth.csv"}) {
        ctx.manifest.outputs.push_back(dir / (r.image + suffix));
      }
    }
    ctx.manifest.outputs.push_back(dir / "manifest.csv");
    ctx.manifest.seeds = {{"master", ctx.cfg.synth.seed}, {"images", seeds}};
    write_run_manifest(ctx.manifest, dir);
  };
}

void setup_train_overlap(Command& c) {
  auto out = std::make_shared<std::string>();
  auto per_class = std::make_shared<int>(1000);
  c.app->add_option("--out", *out, "Model file")->required();
  c.app->add_option("--per-class", *per_class, "Regions per class")
      ->check(CLI::PositiveNumber);
  add_synth_flags(c);
  add_postproc_flags(c);
  c.overrides.add(c.app, "--contour-min", "/separation/contour_min", "Minimum contour points");
  c.overrides.add(c.app, "--n-trees", "/gbdt/n_trees", "Boosting rounds");
  c.overrides.add(c.app, "--max-depth", "/gbdt/max_depth", "Tree depth");
  c.overrides.add(c.app, "--learning-rate", "/gbdt/learning_rate", "Shrinkage");
  c.overrides.add(c.app, "--min-leaf", "/gbdt/min_leaf", "Smallest leaf");
  c.overrides.add(c.app, "--subsample", "/gbdt/subsample", "Row fraction per tree");
  c.overrides.add(c.app, "--gbdt-seed", "/gbdt/seed", "Subsampling seed");
  c.run = [out, per_class](Context& ctx) {
    const auto data = overlap_dataset(ctx.cfg.synth, *per_class, ctx.cfg.postproc,
                                      ctx.cfg.separation.contour_min);
    const auto model = gbdt_train(data, ctx.cfg.gbdt, region_feature_names());
    long long correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      correct += (gbdt_predict(model, data.rows[i]) >= 0.5 ? 1 : 0) == data.labels[i];
    }
    ensure_dir(manifest_dir_for(*out));
    gbdt_save(model, *out);
    std::cout << "regions " << data.size() << ", training accuracy "
              << fmt(static_cast<double>(correct) / static_cast<double>(data.size())) << '\n';
    ctx.manifest.outputs.push_back(*out);
    ctx.manifest.seeds = {{"synth", ctx.cfg.synth.seed}, {"gbdt", ctx.cfg.gbdt.seed}};
    write_run_manifest(ctx.manifest, manifest_dir_for(*out));
  };
}

void setup_train_classifier(Command& c) {
  struct Args {
    std::string out;
    std::string dataset;
    std::vector<std::string> geojson;
    std::vector<std::string> images;
    int synth_samples = 0;
  };
  auto a = std::make_shared<Args>();
  c.app->add_option("--out", a->out, "Model file")->required();
  auto* ds = c.app->add_option("--dataset", a->dataset, "Directory with positive/ and negative/");
  auto* gj = c.app->add_option("--geojson", a->geojson, "QuPath GeoJSON (repeatable)");
  c.app->add_option("--image", a->images, "RGB image for each --geojson");
  auto* sy = c.app->add_option("--synth-samples", a->synth_samples,
                               "Train on this many synthetic nuclei");
  ds->excludes(gj)->excludes(sy);
  gj->excludes(sy);
  add_synth_flags(c);
  c.overrides.add(c.app, "--n-trees", "/rf/n_trees", "Trees");
  c.overrides.add(c.app, "--max-depth", "/rf/max_depth", "Tree depth");
  c.overrides.add(c.app, "--min-leaf", "/rf/min_leaf", "Smallest leaf");
  c.overrides.add(c.app, "--mtry", "/rf/mtry", "Features per split (0 = sqrt)");
  c.overrides.add(c.app, "--bootstrap", "/rf/bootstrap", "true or false");
  c.overrides.add(c.app, "--rf-seed", "/rf/seed", "Forest seed");
  c.run = [a](Context& ctx) {
    const HandcraftedFeatures features(ctx.cfg.stains());
    Dataset data;
    json seeds = {{"rf", ctx.cfg.rf.seed}};
    if (!a->dataset.empty()) {
      for (const auto& [sub, label] : {std::pair{"negative", 0}, std::pair{"positive", 1}}) {
        for (const auto& p : sorted_pngs(fs::path(a->dataset) / sub)) {
          data.add(features(patch_from_crop(load_image(p))), label);
          ctx.manifest.inputs.push_back(p);
        }
      }
    } else if (!a->geojson.empty()) {
      if (a->images.size() != a->geojson.size()) {
        fail(ErrorKind::Usage, "give one --image per --geojson");
      }
      for (std::size_t k = 0; k < a->geojson.size(); ++k) {
        const auto image = load_image(a->images[k]);
        const auto set = load_qupath_geojson(a->geojson[k]);
        for (const auto& w : set.warnings) std::cerr << "warning: " << a->geojson[k] << ": " << w << '\n';
        const auto r = rasterize_annotations(set, image.width, image.height);
        for (const auto& region : extract_regions(r.labels)) {
          data.add(features(extract_patch(image, region)),
                   r.classes[region.label - 1] == NucleusClass::Positive ? 1 : 0);
        }
        ctx.manifest.inputs.push_back(a->images[k]);
        ctx.manifest.inputs.push_back(a->geojson[k]);
      }
    } else if (a->synth_samples > 0) {
      data = nucleus_dataset(ctx.cfg.synth, a->synth_samples, features);
      seeds["synth"] = ctx.cfg.synth.seed;
    } else {
      fail(ErrorKind::Usage, "give --dataset, --geojson with --image, or --synth-samples");
    }
    const auto model = rf_train(data, ctx.cfg.rf);
    ensure_dir(manifest_dir_for(a->out));
    rf_save(model, a->out);
    std::cout << "patches " << data.size() << ", out-of-bag accuracy "
              << (model.oob_accuracy < 0 ? std::string("n/a") : fmt(model.oob_accuracy)) << '\n';
    ctx.manifest.outputs.push_back(a->out);
    ctx.manifest.seeds = seeds;
    write_run_manifest(ctx.manifest, manifest_dir_for(a->out));
  };
}

void setup_separate(Command& c) {
  struct Args {
    std::string mask, prob, out;
  };
  auto a = std::make_shared<Args>();
  c.app->add_option("--mask", a->mask, "Binary mask PNG")->required();
  c.app->add_option("--prob", a->prob, "Probability map PNG")->required();
  c.app->add_option("--out", a->out, "Output directory")->required();
  add_separation_flags(c);
  c.run = [a](Context& ctx) {
    const auto mask = image_to_mask(load_image(a->mask));
    const auto prob = to_probability(load_image(a->prob));
    ctx.manifest.inputs = {a->mask, a->prob};
    const auto det = make_detector(ctx);
    const auto res = separate_all(mask, prob, det.fn, ctx.cfg.separation);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    const fs::path dir(a->out);
    ensure_dir(dir);
    save_label_map(res.labels, dir / "labels.png");
    write_regions_csv(res, dir / "regions.csv");
    ctx.manifest.outputs = {dir / "labels.png", dir / "regions.csv"};
    ctx.manifest.seeds = {{"separation", ctx.cfg.separation.seed}};
    write_run_manifest(ctx.manifest, dir);
  };
}

void setup_classify(Command& c) {
  struct Args {
    std::string image, labels, out;
  };
  auto a = std::make_shared<Args>();
  c.app->add_option("--image", a->image, "RGB image PNG")->required();
  c.app->add_option("--labels", a->labels, "16-bit label PNG")->required();
  c.app->add_option("--out", a->out, "Output directory")->required();
  add_classifier_flags(c);
  c.run = [a](Context& ctx) {
    const auto image = load_image(a->image);
    const auto labels = relabel_sequential(to_label_map(load_image(a->labels)));
    ctx.manifest.inputs = {a->image, a->labels};
    const auto clf = make_classifier(ctx);
    const auto nuclei = classify_nuclei(labels, image, *clf);
    const fs::path dir(a->out);
    ensure_dir(dir);
    write_nuclei_csv(nuclei, dir / "nuclei.csv");
    save_image(render_overlay(image, labels, nuclei), dir / "overlay.png");
    ctx.manifest.outputs = {dir / "nuclei.csv", dir / "overlay.png"};
    write_run_manifest(ctx.manifest, dir);
  };
}

void setup_pipeline(Command& c) {
  struct Args {
    std::string image, prob, images, out;
  };
  auto a = std::make_shared<Args>();
  auto* single = c.app->add_option("--image", a->image, "RGB image PNG");
  auto* prob = c.app->add_option("--prob", a->prob, "Probability map PNG");
  auto* batch = c.app->add_option("--images", a->images,
                                  "Directory of <name>.png with <name>_prob.png");
  c.app->add_option("--out", a->out, "Output directory")->required();
  single->needs(prob);
  prob->needs(single);
  batch->excludes(single);
  add_postproc_flags(c);
  add_separation_flags(c);
  add_classifier_flags(c);
  c.run = [a](Context& ctx) {
    struct Item {
      std::string name;
      fs::path image, prob;
      RegionCount counts;
    };
    std::vector<Item> items;
    if (!a->images.empty()) {
      for (const auto& p : sorted_pngs(a->images)) {
        const auto stem = p.stem().string();
        if (ends_with(stem, "_prob") || ends_with(stem, "_labels") || ends_with(stem, "_overlay")) {
          continue;
        }
        items.push_back({stem, p, p.parent_path() / (stem + "_prob.png"), {}});
      }
      if (items.empty()) fail(ErrorKind::Input, "no images in " + a->images);
    } else if (!a->image.empty()) {
      items.push_back({fs::path(a->image).stem().string(), a->image, a->prob, {}});
    } else {
      fail(ErrorKind::Usage, "give --image with --prob, or --images");
    }
    for (const auto& it : items) {
      ctx.manifest.inputs.push_back(it.image);
      ctx.manifest.inputs.push_back(it.prob);
    }
    const auto det = make_detector(ctx);
    const auto clf = make_classifier(ctx);
    const fs::path dir(a->out);
    ensure_dir(dir);
    for_each_item(
        items.size(),
        [&](std::size_t i) {
          auto& it = items[i];
          const auto rgb = load_image(it.image);
          const auto prob = to_probability(load_image(it.prob));
          auto res = run_pipeline(rgb, prob, ctx.cfg.postproc, det.fn, ctx.cfg.separation, *clf);
          save_label_map(res.separation.labels, dir / (it.name + "_labels.png"));
          write_nuclei_csv(res.nuclei, dir / (it.name + "_nuclei.csv"));
          save_image(render_overlay(rgb, res.separation.labels, res.nuclei),
                     dir / (it.name + "_overlay.png"));
          res.counts.region_id = it.name;
          it.counts = res.counts;
        },
        [&](std::size_t i) { return items[i].name; });

    auto os = open_out(dir / "pi_report.csv");
    os << "image,N,T,PI\n";
    std::vector<RegionCount> counted;
    long long n_sum = 0;
    long long t_sum = 0;
    for (const auto& it : items) {
      const auto& rc = it.counts;
      n_sum += rc.n_positive;
      t_sum += rc.n_total;
      os << it.name << ',' << rc.n_positive << ',' << rc.n_total << ',';
      if (rc.n_total > 0) {
        os << fmt(100.0 * static_cast<double>(rc.n_positive) / static_cast<double>(rc.n_total));
        counted.push_back(rc);
      } else {
        std::cerr << "warning: " << it.name << ": no nuclei found, excluded from the case PI\n";
      }
      os << '\n';
      for (const char* suffix : {"_labels.png", "_nuclei.csv", "_overlay.png"}) {
        ctx.manifest.outputs.push_back(dir / (it.name + suffix));
      }
    }
    os << "case," << n_sum << ',' << t_sum << ',';
    if (!counted.empty()) os << fmt(pi_score(counted).pi);
    os << '\n';
    os.close();
    ctx.manifest.outputs.push_back(dir / "pi_report.csv");
    ctx.manifest.seeds = {{"separation", ctx.cfg.separation.seed}};
    write_run_manifest(ctx.manifest, dir);
  };
}

void setup_score(Command& c) {
  struct Args {
    std::string rois, manual, out;
  };
  auto a = std::make_shared<Args>();
  c.app->add_option("--rois", a->rois, "CSV: case,roi,kind,nuclei[,labels]")->required();
  c.app->add_option("--manual", a->manual, "CSV: case,manual_pi");
  c.app->add_option("--out", a->out, "Output directory")->required();
  c.run = [a](Context& ctx) {
    const fs::path list_path(a->rois);
    const auto base = list_path.parent_path();
    const auto t = read_csv(list_path);
    ctx.manifest.inputs.push_back(list_path);
    const int c_case = require_column(t, "case", list_path);
    const int c_roi = require_column(t, "roi", list_path);
    const int c_kind = require_column(t, "kind", list_path);
    const int c_nuc = require_column(t, "nuclei", list_path);
    const int c_lab = t.column("labels");
    if (t.rows.empty()) fail(ErrorKind::Input, list_path.string() + " lists no ROIs");

    std::map<std::string, std::vector<RoiClassification>> cases;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& row : t.rows) {
      if (!seen.insert({row[c_case], row[c_roi]}).second) {
        fail(ErrorKind::Input, "duplicate ROI '" + row[c_roi] + "' in case '" + row[c_case] + "'");
      }
      const auto nuc_path = base / row[c_nuc];
      RoiClassification roi{row[c_roi], parse_roi_kind(row[c_kind]), read_nuclei_csv(nuc_path)};
      ctx.manifest.inputs.push_back(nuc_path);
      if (c_lab >= 0 && !row[c_lab].empty()) {
        const auto lab_path = base / row[c_lab];
        count_roi(to_label_map(load_image(lab_path)), roi.nuclei, roi.roi_id, roi.kind);
        ctx.manifest.inputs.push_back(lab_path);
      }
      cases[row[c_case]].push_back(std::move(roi));
    }
    for (auto& [name, rois] : cases) {
      std::sort(rois.begin(), rois.end(),
                [](const auto& x, const auto& y) { return x.roi_id < y.roi_id; });
    }

    const fs::path dir(a->out);
    ensure_dir(dir);
    std::map<std::string, double> auto_pi;
    {
      auto os = open_out(dir / "per_case.csv");
      os << "case,roi,N,T,PI_roi,PI_case\n";
      for (const auto& [name, rois] : cases) {
        const auto report = score_case(rois);
        for (const auto& w : report.warnings) std::cerr << "warning: case " << name << ": " << w << '\n';
        auto_pi[name] = report.pi;
        for (const auto& roi : rois) {
          long long n = 0;
          for (const auto& rec : roi.nuclei) n += rec.cls == NucleusClass::Positive;
          const auto total = static_cast<long long>(roi.nuclei.size());
          os << name << ',' << roi.roi_id << ',' << n << ',' << total << ',';
          if (total > 0) os << fmt(100.0 * static_cast<double>(n) / static_cast<double>(total));
          os << ',' << fmt(report.pi) << '\n';
        }
      }
    }
    ctx.manifest.outputs.push_back(dir / "per_case.csv");

    if (!a->manual.empty()) {
      const fs::path mpath(a->manual);
      const auto m = read_csv(mpath);
      ctx.manifest.inputs.push_back(mpath);
      const int m_case = require_column(m, "case", mpath);
      const int m_pi = require_column(m, "manual_pi", mpath);
      std::map<std::string, double> manual;
      for (const auto& row : m.rows) {
        try {
          manual[row[m_case]] = std::stod(row[m_pi]);
        } catch (const std::exception&) {
          fail(ErrorKind::Input, mpath.string() + ": malformed manual_pi '" + row[m_pi] + "'");
        }
      }
      std::vector<std::pair<double, double>> pairs;
      std::vector<std::string> names;
      for (const auto& [name, pi] : auto_pi) {
        const auto it = manual.find(name);
        if (it == manual.end()) {
          std::cerr << "warning: case " << name << " has no manual PI\n";
          continue;
        }
        pairs.emplace_back(it->second, pi);
        names.push_back(name);
      }
      const auto s = agreement(pairs);
      {
        auto os = open_out(dir / "agreement.csv");
        os << "n,pearson,spearman,r2,mean_diff,sd,loa_lower,loa_upper\n";
        os << pairs.size() << ',' << fmt(s.pearson) << ',' << fmt(s.spearman) << ','
           << fmt(s.r2) << ',' << fmt(s.bland_mean_diff) << ',' << fmt(s.bland_sd) << ','
           << fmt(s.loa_lower) << ',' << fmt(s.loa_upper) << '\n';
      }
      {
        auto os = open_out(dir / "bland_altman.csv");
        os << "case,manual,auto,mean_xy,diff\n";
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          const auto [x, y] = pairs[i];
          os << names[i] << ',' << fmt(x) << ',' << fmt(y) << ',' << fmt(0.5 * (x + y)) << ','
             << fmt(x - y) << '\n';
        }
      }
      ctx.manifest.outputs.push_back(dir / "agreement.csv");
      ctx.manifest.outputs.push_back(dir / "bland_altman.csv");
    }
    write_run_manifest(ctx.manifest, dir);
  };
}

void setup_eval(Command& c) {
  struct Args {
    std::string pred, gt, out;
  };
  auto a = std::make_shared<Args>();
  c.app->add_option("--pred", a->pred, "Directory of predicted label PNGs")->required();
  c.app->add_option("--gt", a->gt, "Directory of ground-truth label PNGs")->required();
  c.app->add_option("--out", a->out, "Output directory")->required();
  c.run = [a](Context& ctx) {
    const auto pred = sorted_pngs(a->pred);
    const auto gt = sorted_pngs(a->gt);
    std::set<std::string> pn;
    std::set<std::string> gn;
    for (const auto& p : pred) pn.insert(p.filename().string());
    for (const auto& p : gt) gn.insert(p.filename().string());
    std::string unmatched;
    for (const auto& n : pn) if (!gn.count(n)) unmatched += " pred/" + n;
    for (const auto& n : gn) if (!pn.count(n)) unmatched += " gt/" + n;
    if (!unmatched.empty()) fail(ErrorKind::Input, "unmatched files:" + unmatched);
    if (gt.empty()) fail(ErrorKind::Input, "no label maps to evaluate");

    struct Row {
      InstanceMetrics inst;
      PixelMetrics pix;
    };
    std::vector<Row> rows(gt.size());
    for_each_item(
        gt.size(),
        [&](std::size_t i) {
          const auto p = to_label_map(load_image(pred[i]));
          const auto g = to_label_map(load_image(gt[i]));
          rows[i].inst = instance_metrics(p, g);
          rows[i].pix = pixel_metrics(foreground(p), foreground(g));
        },
        [&](std::size_t i) { return gt[i].filename().string(); });

    const fs::path dir(a->out);
    ensure_dir(dir);
    auto os = open_out(dir / "eval.csv");
    os << "image,dice2,aji,pq,sq,dq,acc,miu,fiu\n";
    std::array<double, 8> sum{};
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto& r = rows[i];
      const std::array<double, 8> v{r.inst.dice2, r.inst.aji, r.inst.pq, r.inst.sq,
                                    r.inst.dq,    r.pix.acc,  r.pix.miu, r.pix.fiu};
      os << gt[i].stem().string();
      for (std::size_t k = 0; k < v.size(); ++k) {
        os << ',' << fmt(v[k]);
        sum[k] += v[k];
      }
      os << '\n';
      ctx.manifest.inputs.push_back(pred[i]);
      ctx.manifest.inputs.push_back(gt[i]);
    }
    os << "mean";
    for (double s : sum) os << ',' << fmt(s / static_cast<double>(gt.size()));
    os << '\n';
    os.close();
    ctx.manifest.outputs.push_back(dir / "eval.csv");
    write_run_manifest(ctx.manifest, dir);
  };
}

void setup_import_geojson(Command& c) {
  struct Args {
    std::string geojson, image, out;
    int width = 0;
    int height = 0;
  };
  auto a = std::make_shared<Args>();
  c.app->add_option("--geojson", a->geojson, "QuPath GeoJSON export")->required();
  auto* img = c.app->add_option("--image", a->image, "Image that fixes the raster size");
  auto* w = c.app->add_option("--width", a->width, "Raster width")->check(CLI::PositiveNumber);
  auto* h = c.app->add_option("--height", a->height, "Raster height")->check(CLI::PositiveNumber);
  c.app->add_option("--out", a->out, "Output directory")->required();
  w->needs(h);
  h->needs(w);
  img->excludes(w);
  c.run = [a](Context& ctx) {
    int width = a->width;
    int height = a->height;
    ctx.manifest.inputs.push_back(a->geojson);
    if (!a->image.empty()) {
      const auto image = load_image(a->image);
      width = image.width;
      height = image.height;
      ctx.manifest.inputs.push_back(a->image);
    }
    if (width < 1 || height < 1) fail(ErrorKind::Usage, "give --image or --width and --height");
    const auto set = load_qupath_geojson(a->geojson);
    const auto r = rasterize_annotations(set, width, height);
    const fs::path dir(a->out);
    ensure_dir(dir);
    save_label_map(r.labels, dir / "labels.png");
    {
      auto os = open_out(dir / "classes.csv");
      os << "label,class\n";
      for (std::size_t k = 0; k < r.classes.size(); ++k) {
        os << k + 1 << ',' << to_string(r.classes[k]) << '\n';
      }
    }
    {
      auto os = open_out(dir / "warnings.txt");
      for (const auto& msg : set.warnings) {
        os << msg << '\n';
        std::cerr << "warning: " << msg << '\n';
      }
    }
    ctx.manifest.outputs = {dir / "labels.png", dir / "classes.csv", dir / "warnings.txt"};
    write_run_manifest(ctx.manifest, dir);
  };
}

int threads_from_env() {
  const char* env = std::getenv("KI67_THREADS");
  if (env == nullptr || *env == '\0') return -1;
  try {
    std::size_t used = 0;
    const int v = std::stoi(env, &used);
    if (used == std::string(env).size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Usage, std::string("KI67_THREADS must be a non-negative integer, got '") + env + "'");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Ki-67 proliferation index pipeline"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::pair<std::string, void (*)(Command&)>>> specs = {
      {"synth", {"Generate a synthetic H-DAB dataset", setup_synth}},
      {"train-overlap", {"Train the overlap detector on synthetic regions", setup_train_overlap}},
      {"train-classifier", {"Train the RF nucleus classifier", setup_train_classifier}},
      {"separate", {"Split overlapped regions of a mask", setup_separate}},
      {"classify", {"Classify nuclei of a label map", setup_classify}},
      {"pipeline", {"Mask, separate, classify and score images", setup_pipeline}},
      {"score", {"Compute case PI and agreement with manual scores", setup_score}},
      {"eval", {"Segmentation metrics of predicted vs. truth label maps", setup_eval}},
      {"import-geojson", {"Rasterize QuPath annotations", setup_import_geojson}},
  };
  std::vector<std::unique_ptr<Command>> commands;
  for (const auto& [name, spec] : specs) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, spec.first);
    cmd->app->add_option("--config", cmd->config_path, "JSON config file");
    cmd->app->add_option("--threads", cmd->threads, "Worker threads (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    spec.second(*cmd);
    commands.push_back(std::move(cmd));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  }

  for (auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    Context ctx;
    ctx.doc = cmd->config_path.empty() ? default_config() : load_config_file(cmd->config_path);
    ctx.doc = cmd->overrides.apply(ctx.doc);
    if (const int env = threads_from_env(); env >= 0) ctx.doc["threads"] = env;
    if (cmd->threads >= 0) ctx.doc["threads"] = cmd->threads;
    ctx.cfg = parse_config(ctx.doc);
    if (ctx.cfg.threads > 0) omp_set_num_threads(ctx.cfg.threads);
    ctx.manifest.command = cmd->app->get_name();
    ctx.manifest.config = ctx.doc;
    ctx.manifest.config.erase("threads");
    if (!cmd->config_path.empty()) ctx.manifest.inputs.push_back(cmd->config_path);
    cmd->run(ctx);
  }
  return 0;
}

}  // namespace ki67::cli
