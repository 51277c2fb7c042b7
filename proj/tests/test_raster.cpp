#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "ki67/raster.hpp"
#include "ki67/rng.hpp"
#include "support.hpp"

using namespace ki67;

TEST_CASE("grid shape and indexing") {
  Grid<int> g(3, 2, 7);
  CHECK(g.size() == 6);
  g(2, 1) = 9;
  CHECK(g[5] == 9);
  CHECK(g.contains(2, 1));
  CHECK_FALSE(g.contains(3, 0));
  CHECK_FALSE(g.contains(0, -1));
  CHECK_THROWS_AS(Grid<int>(2, 2, std::vector<int>(3)), Error);
}

TEST_CASE("png round trip of an 8-bit RGB image") {
  const auto dir = test::scratch_dir("raster_rgb");
  auto img = RasterImage::blank(256, 256, 3, 8);
  Rng rng(3);
  for (auto& v : img.data) v = static_cast<std::uint16_t>(rng.below(256));
  save_image(img, dir / "a.png");
  const auto back = load_image(dir / "a.png");
  CHECK(back.width == 256);
  CHECK(back.height == 256);
  CHECK(back.channels == 3);
  CHECK(back.bit_depth == 8);
  CHECK(back.data == img.data);
}

TEST_CASE("1x1 gray png with value 0") {
  const auto dir = test::scratch_dir("raster_1x1");
  save_image(RasterImage::blank(1, 1, 1, 8, 0), dir / "p.png");
  const auto img = load_image(dir / "p.png");
  CHECK(img.width == 1);
  CHECK(img.height == 1);
  CHECK(img.channels == 1);
  CHECK(img.data == std::vector<std::uint16_t>{0});
}

TEST_CASE("16-bit label png keeps its maximum") {
  const auto dir = test::scratch_dir("raster_16");
  LabelMap l(5, 4);
  l(4, 3) = 37;
  l(0, 0) = 1;
  save_label_map(l, dir / "l.png");
  const auto img = load_image(dir / "l.png");
  CHECK(img.bit_depth == 16);
  CHECK(*std::max_element(img.data.begin(), img.data.end()) == 37);
  CHECK(to_label_map(img) == l);
}

TEST_CASE("label map round trip") {
  const auto dir = test::scratch_dir("raster_labels");
  SUBCASE("labels {0,1,2}") {
    LabelMap l(3, 1, std::vector<std::int32_t>{0, 1, 2});
    save_label_map(l, dir / "a.png");
    CHECK(to_label_map(load_image(dir / "a.png")) == l);
  }
  SUBCASE("all zero") {
    LabelMap l(7, 3);
    save_label_map(l, dir / "b.png");
    CHECK(to_label_map(load_image(dir / "b.png")) == l);
  }
  SUBCASE("300 instances") {
    LabelMap l(60, 50);
    for (int k = 0; k < 300; ++k) {
      const int x0 = (k % 30) * 2;
      const int y0 = (k / 30) * 5;
      l(x0, y0) = k + 1;
      l(x0 + 1, y0 + 1) = k + 1;
    }
    save_label_map(l, dir / "c.png");
    CHECK(to_label_map(load_image(dir / "c.png")) == l);
  }
  SUBCASE("max 65535 round trips, 65536 is rejected") {
    LabelMap l(2, 1, std::vector<std::int32_t>{65535, 1});
    save_label_map(l, dir / "d.png");
    CHECK(to_label_map(load_image(dir / "d.png")) == l);
    l(0, 0) = 65536;
    CHECK_THROWS_AS(save_label_map(l, dir / "e.png"), Error);
  }
}

TEST_CASE("to_probability divides by the bit-depth maximum") {
  auto img8 = RasterImage::blank(2, 1, 1, 8);
  img8.data = {255, 0};
  const auto p8 = to_probability(img8);
  CHECK(p8[0] == 1.0);
  CHECK(p8[1] == 0.0);

  auto img16 = RasterImage::blank(1, 1, 1, 16);
  img16.data = {32768};
  CHECK(to_probability(img16)[0] == doctest::Approx(0.50000763).epsilon(1e-8));
  CHECK(to_probability(img16)[0] == 32768.0 / 65535.0);

  CHECK_THROWS_AS(to_probability(RasterImage::blank(1, 1, 3, 8)), Error);
}

TEST_CASE("to_probability is monotone") {
  auto img = RasterImage::blank(65536, 1, 1, 16);
  for (int v = 0; v < 65536; ++v) img.data[v] = static_cast<std::uint16_t>(v);
  const auto p = to_probability(img);
  for (int v = 1; v < 65536; ++v) REQUIRE(p[v - 1] <= p[v]);
  CHECK(p[0] == 0.0);
  CHECK(p[65535] == 1.0);
}

TEST_CASE("load errors are input errors") {
  const auto dir = test::scratch_dir("raster_err");
  try {
    load_image(dir / "missing.png");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Input);
    CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
  }
  {
    std::ofstream os(dir / "junk.png");
    os << "not a png";
  }
  CHECK_THROWS_AS(load_image(dir / "junk.png"), Error);
}

TEST_CASE("relabel_sequential orders by first raster pixel") {
  LabelMap l(4, 1, std::vector<std::int32_t>{0, 9, 4, 9});
  const auto r = relabel_sequential(l);
  CHECK(r == LabelMap(4, 1, std::vector<std::int32_t>{0, 1, 2, 1}));
}

TEST_CASE("probability quantization round trip") {
  ProbabilityMap p(3, 1, std::vector<double>{0.0, 0.5, 1.0});
  const auto img = from_probability(p);
  CHECK(img.data == std::vector<std::uint16_t>{0, 128, 255});
}
