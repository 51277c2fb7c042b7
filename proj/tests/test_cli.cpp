#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ki67/raster.hpp"
#include "support.hpp"

using namespace ki67;

namespace {

const std::string kCli = KI67_CLI;
const std::filesystem::path kData = KI67_TEST_DATA;

struct Run {
  int code = -1;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Run run(const std::filesystem::path& dir, const std::string& args) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = kCli + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const auto dir = test::scratch_dir("cli_usage");
  CHECK(run(dir, "").code == 1);
  CHECK(run(dir, "frobnicate").code == 1);
  CHECK(run(dir, "synth --out x --bogus").code == 1);
  CHECK(run(dir, "eval --pred a").code == 1);
  CHECK(run(dir, "synth --out " + (dir / "s").string() + " --window 4").code == 1);
  CHECK(run(dir, "synth --out " + (dir / "s").string() + " --splitter magic").code == 1);
  CHECK(run(dir, "--version").code == 0);
}

TEST_CASE("missing input exits with 2 and names the path") {
  const auto dir = test::scratch_dir("cli_missing");
  const auto r = run(dir, "pipeline --image " + (dir / "nope.png").string() + " --prob " +
                              (dir / "nope_prob.png").string() + " --splitter none --out " +
                              (dir / "o").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("nope") != std::string::npos);
  CHECK(run(dir, "pipeline --config " + (dir / "absent.json").string() + " --out x").code == 2);
}

TEST_CASE("model errors exit with 3") {
  const auto dir = test::scratch_dir("cli_model");
  {
    std::ofstream os(dir / "bad.model");
    os << "ki67-model gbdt 99\n";
  }
  BinaryMask m(8, 8);
  save_image(from_probability(test::to_prob(m)), dir / "m.png");
  const auto r = run(dir, "separate --mask " + (dir / "m.png").string() + " --prob " +
                              (dir / "m.png").string() + " --overlap-model " +
                              (dir / "bad.model").string() + " --out " + (dir / "o").string());
  CHECK(r.code == 3);
}

TEST_CASE("processing failures exit with 4") {
  const auto dir = test::scratch_dir("cli_processing");
  const auto r = run(dir, "synth --out " + (dir / "s").string() +
                              " --width 64 --height 64 --n-nuclei 300");
  CHECK(r.code == 4);
  CHECK(r.err.find("lower") != std::string::npos);
}

TEST_CASE("synthetic end-to-end run") {
  const auto dir = test::scratch_dir("cli_e2e");
  const auto data = (dir / "data").string();
  REQUIRE(run(dir, "synth --out " + data + " --n-images 2 --seed 5").code == 0);
  CHECK(std::filesystem::exists(dir / "data" / "run_manifest.json"));
  const auto model = (dir / "m" / "overlap.model").string();
  REQUIRE(run(dir, "train-overlap --out " + model + " --per-class 60 --n-trees 30 --seed 8").code ==
          0);
  const auto out = (dir / "out").string();
  REQUIRE(run(dir, "pipeline --images " + data + " --overlap-model " + model + " --out " + out)
              .code == 0);
  for (const char* f : {"img_0000_labels.png", "img_0000_nuclei.csv", "img_0000_overlay.png",
                        "img_0001_labels.png", "pi_report.csv", "run_manifest.json"}) {
    CHECK(std::filesystem::exists(dir / "out" / f));
  }
  const auto report = read_rows(dir / "out" / "pi_report.csv");
  REQUIRE(report.size() == 4);
  CHECK(report[0] == std::vector<std::string>{"image", "N", "T", "PI"});
  CHECK(report[3][0] == "case");
  const auto nuclei = read_rows(dir / "out" / "img_0000_nuclei.csv");
  CHECK(nuclei[0] == std::vector<std::string>{"label", "centroid_x", "centroid_y", "area",
                                              "class", "confidence"});
  const auto overlay = load_image(dir / "out" / "img_0000_overlay.png");
  CHECK(overlay.channels == 3);

  std::filesystem::create_directories(dir / "pred");
  std::filesystem::create_directories(dir / "gt");
  for (const char* name : {"img_0000", "img_0001"}) {
    std::filesystem::copy_file(dir / "out" / (std::string(name) + "_labels.png"),
                               dir / "pred" / (std::string(name) + ".png"));
    std::filesystem::copy_file(dir / "data" / (std::string(name) + "_labels.png"),
                               dir / "gt" / (std::string(name) + ".png"));
  }
  REQUIRE(run(dir, "eval --pred " + (dir / "gt").string() + " --gt " + (dir / "gt").string() +
                       " --out " + (dir / "self").string())
              .code == 0);
  const auto self = read_rows(dir / "self" / "eval.csv");
  REQUIRE(self.size() == 4);
  CHECK(self[0] == std::vector<std::string>{"image", "dice2", "aji", "pq", "sq", "dq", "acc",
                                            "miu", "fiu"});
  for (std::size_t c = 1; c < self[3].size(); ++c) CHECK(std::stod(self[3][c]) == 1.0);
  REQUIRE(run(dir, "eval --pred " + (dir / "pred").string() + " --gt " + (dir / "gt").string() +
                       " --out " + (dir / "ev").string())
              .code == 0);
  const auto ev = read_rows(dir / "ev" / "eval.csv");
  CHECK(std::stod(ev[3][3]) > 0.6);

  std::filesystem::create_directories(dir / "empty");
  CHECK(run(dir, "eval --pred " + (dir / "empty").string() + " --gt " + (dir / "empty").string() +
                     " --out " + (dir / "e").string())
            .code != 0);
  std::filesystem::create_directories(dir / "lonely");
  std::filesystem::copy_file(dir / "gt" / "img_0000.png", dir / "lonely" / "other.png");
  const auto unmatched = run(dir, "eval --pred " + (dir / "lonely").string() + " --gt " +
                                      (dir / "gt").string() + " --out " + (dir / "u").string());
  CHECK(unmatched.code == 2);
  CHECK(unmatched.err.find("other.png") != std::string::npos);
}

TEST_CASE("blank image gives an empty report with a warning") {
  const auto dir = test::scratch_dir("cli_blank");
  REQUIRE(run(dir, "synth --out " + (dir / "d").string() + " --n-nuclei 0").code == 0);
  const auto r = run(dir, "pipeline --image " + (dir / "d" / "img_0000.png").string() +
                              " --prob " + (dir / "d" / "img_0000_prob.png").string() +
                              " --splitter none --out " + (dir / "o").string());
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  const auto rows = read_rows(dir / "o" / "pi_report.csv");
  REQUIRE(rows.size() >= 2);
  CHECK(rows[1][2] == "0");
}

TEST_CASE("score with manual PI") {
  const auto dir = test::scratch_dir("cli_score");
  auto nuclei = [&](const std::string& name, int pos, int total) {
    std::ofstream os(dir / name);
    os << "label,centroid_x,centroid_y,area,class,confidence\n";
    for (int i = 0; i < total; ++i) {
      os << i + 1 << ",1,1,10," << (i < pos ? "positive" : "negative") << ",0.5\n";
    }
    return (dir / name).string();
  };
  {
    std::ofstream os(dir / "rois.csv");
    os << "case,roi,kind,nuclei\n";
    os << "A,h,hotspot," << nuclei("a1.csv", 10, 100) << "\n";
    os << "A,m,medium," << nuclei("a2.csv", 30, 100) << "\n";
    os << "B,h,hotspot," << nuclei("b1.csv", 5, 10) << "\n";
    os << "C,h,hotspot," << nuclei("c1.csv", 8, 10) << "\n";
    os << "C,e,edge," << nuclei("c2.csv", 0, 0) << "\n";
  }
  {
    std::ofstream os(dir / "manual.csv");
    os << "case,manual_pi\nA,22\nB,48\nC,85\n";
  }
  const auto r = run(dir, "score --rois " + (dir / "rois.csv").string() + " --manual " +
                              (dir / "manual.csv").string() + " --out " + (dir / "o").string());
  REQUIRE(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  const auto per_case = read_rows(dir / "o" / "per_case.csv");
  CHECK(per_case[0] == std::vector<std::string>{"case", "roi", "N", "T", "PI_roi", "PI_case"});
  CHECK(std::stod(per_case[1][5]) == doctest::Approx(20.0));
  const auto agreement = read_rows(dir / "o" / "agreement.csv");
  REQUIRE(agreement.size() == 2);
  CHECK(agreement[1][0] == "3");
  const auto ba = read_rows(dir / "o" / "bland_altman.csv");
  REQUIRE(ba.size() == 4);
  CHECK(ba[0] == std::vector<std::string>{"case", "manual", "auto", "mean_xy", "diff"});
  CHECK(std::stod(ba[1][4]) == doctest::Approx(2.0));
}

TEST_CASE("geojson import") {
  const auto dir = test::scratch_dir("cli_geojson");
  REQUIRE(run(dir, "import-geojson --geojson " + (kData / "two_squares.geojson").string() +
                       " --width 20 --height 12 --out " + (dir / "o").string())
              .code == 0);
  const auto labels = to_label_map(load_image(dir / "o" / "labels.png"));
  CHECK(max_label(labels) == 2);
  const auto classes = read_rows(dir / "o" / "classes.csv");
  CHECK(classes == std::vector<std::vector<std::string>>{
                       {"label", "class"}, {"1", "Positive"}, {"2", "Negative"}});
  CHECK(run(dir, "import-geojson --geojson " + (kData / "bowtie.geojson").string() +
                     " --width 20 --height 12 --out " + (dir / "b").string())
            .code == 2);
  const auto manifest = nlohmann::json::parse(slurp(dir / "o" / "run_manifest.json"));
  CHECK(manifest["command"] == "import-geojson");
  CHECK(manifest.contains("config_hash"));
  CHECK_FALSE(manifest["config"].contains("threads"));
}
