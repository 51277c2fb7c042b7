#include <doctest.h>

#include <queue>

#include "ki67/metrics.hpp"
#include "ki67/postproc.hpp"
#include "ki67/regions.hpp"
#include "ki67/synth.hpp"
#include "support.hpp"

using namespace ki67;

namespace {

PostprocParams with_offset(double offset, int window = 61) {
  PostprocParams p;
  p.offset = offset;
  p.window = window;
  return p;
}

// Background pixels reachable from the border through 4-neighbours stay
// background; everything else becomes foreground.
BinaryMask flood_fill_oracle(const BinaryMask& m) {
  const int w = m.width();
  const int h = m.height();
  BinaryMask outside(w, h);
  std::queue<Point> q;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if ((x == 0 || y == 0 || x == w - 1 || y == h - 1) && !m(x, y)) {
        outside(x, y) = 1;
        q.push({x, y});
      }
    }
  }
  while (!q.empty()) {
    const auto p = q.front();
    q.pop();
    const int dx[] = {1, -1, 0, 0};
    const int dy[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = p.x + dx[k];
      const int ny = p.y + dy[k];
      if (m.contains(nx, ny) && !m(nx, ny) && !outside(nx, ny)) {
        outside(nx, ny) = 1;
        q.push({nx, ny});
      }
    }
  }
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = outside[i] ? 0 : 1;
  return out;
}

// Euclidean disc of radius r; erosion treats outside pixels as foreground,
// dilation treats them as background.
BinaryMask open_oracle(const BinaryMask& m, int r) {
  const int w = m.width();
  const int h = m.height();
  auto in_se = [r](int dx, int dy) { return dx * dx + dy * dy <= r * r; };
  BinaryMask e(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool all = true;
      for (int dy = -r; dy <= r && all; ++dy) {
        for (int dx = -r; dx <= r && all; ++dx) {
          if (in_se(dx, dy) && m.contains(x + dx, y + dy) && !m(x + dx, y + dy)) all = false;
        }
      }
      e(x, y) = all ? 1 : 0;
    }
  }
  BinaryMask d(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any = false;
      for (int dy = -r; dy <= r && !any; ++dy) {
        for (int dx = -r; dx <= r && !any; ++dx) {
          if (in_se(dx, dy) && e.contains(x + dx, y + dy) && e(x + dx, y + dy)) any = true;
        }
      }
      d(x, y) = any ? 1 : 0;
    }
  }
  return d;
}

}  // namespace

TEST_CASE("threshold sign convention on a uniform field") {
  ProbabilityMap p(20, 20, 0.5);
  CHECK(test::count(adaptive_threshold(p, with_offset(0.1, 5))) == 400);
  CHECK(test::count(adaptive_threshold(p, with_offset(-0.1, 5))) == 0);
}

TEST_CASE("all-zero map with offset 0 is background") {
  ProbabilityMap p(16, 16, 0.0);
  CHECK(test::count(adaptive_threshold(p, with_offset(0.0, 3))) == 0);
}

TEST_CASE("bright disc on dark background is foreground") {
  const auto disc = test::disc_mask(64, 64, 32, 32, 8);
  const auto p = test::to_prob(disc, 0.9, 0.1);
  for (double offset : {0.02, -0.3}) {
    const auto m = adaptive_threshold(p, with_offset(offset, 61));
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (disc[i]) REQUIRE(m[i] == 1);
    }
  }
}

TEST_CASE("threshold is invariant to a constant shift") {
  Rng rng(9);
  ProbabilityMap p(40, 30);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(rng.below(129)) / 256.0;
  ProbabilityMap shifted = p;
  for (std::size_t i = 0; i < p.size(); ++i) shifted[i] += 0.25;
  for (double offset : {0.0, 0.02, -0.1}) {
    for (int window : {3, 7, 61}) {
      CHECK(adaptive_threshold(p, with_offset(offset, window)) ==
            adaptive_threshold(shifted, with_offset(offset, window)));
    }
  }
}

TEST_CASE("parameter validation") {
  ProbabilityMap p(8, 8, 0.5);
  CHECK_THROWS_AS(adaptive_threshold(p, with_offset(0.0, 4)), Error);
  CHECK_THROWS_AS(adaptive_threshold(p, with_offset(0.0, 1)), Error);
  CHECK_THROWS_AS(adaptive_threshold(p, with_offset(1.5, 3)), Error);
  CHECK_THROWS_AS(adaptive_threshold(ProbabilityMap(), with_offset(0.0, 3)), Error);
}

TEST_CASE("fill_holes") {
  SUBCASE("ring becomes a disc") {
    auto ring = test::disc_mask(30, 30, 15, 15, 10);
    const auto inner = test::disc_mask(30, 30, 15, 15, 6);
    for (std::size_t i = 0; i < ring.size(); ++i) ring[i] = ring[i] && !inner[i];
    CHECK(fill_holes(ring) == test::disc_mask(30, 30, 15, 15, 10));
  }
  SUBCASE("mask without holes is unchanged") {
    const auto disc = test::disc_mask(20, 20, 8, 8, 5);
    CHECK(fill_holes(disc) == disc);
  }
  SUBCASE("nested rings fill the outer disc") {
    BinaryMask m(40, 40);
    const auto d12 = test::disc_mask(40, 40, 20, 20, 12);
    const auto d9 = test::disc_mask(40, 40, 20, 20, 9);
    const auto d6 = test::disc_mask(40, 40, 20, 20, 6);
    const auto d3 = test::disc_mask(40, 40, 20, 20, 3);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (d12[i] && !d9[i]) || (d6[i] && !d3[i]);
    CHECK(fill_holes(m) == flood_fill_oracle(m));
    CHECK(fill_holes(m) == d12);
  }
  SUBCASE("random masks match the flood-fill oracle and are idempotent") {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
      const auto m = test::random_mask(rng, 1 + static_cast<int>(rng.below(25)),
                                       1 + static_cast<int>(rng.below(25)), 0.55);
      const auto f = fill_holes(m);
      REQUIRE(f == flood_fill_oracle(m));
      REQUIRE(fill_holes(f) == f);
    }
  }
}

TEST_CASE("binary_open") {
  SUBCASE("radius 0 is the identity") {
    Rng rng(1);
    const auto m = test::random_mask(rng, 17, 13, 0.5);
    CHECK(binary_open(m, 0) == m);
  }
  SUBCASE("isolated pixel is removed") {
    BinaryMask m(7, 7);
    m(3, 3) = 1;
    CHECK(test::count(binary_open(m, 1)) == 0);
  }
  SUBCASE("spur is removed, body kept") {
    BinaryMask m(12, 12);
    test::add_rect(m, 0, 0, 9, 11);
    m(10, 5) = 1;
    m(11, 5) = 1;
    const auto o = binary_open(m, 1);
    CHECK(o == open_oracle(m, 1));
    CHECK(o(11, 5) == 0);
    CHECK(o(5, 5) == 1);
  }
  SUBCASE("random masks match the brute-force opening") {
    Rng rng(21);
    for (int t = 0; t < 30; ++t) {
      const auto m = test::random_mask(rng, 15, 11, 0.65);
      for (int r : {1, 2}) REQUIRE(binary_open(m, r) == open_oracle(m, r));
    }
  }
  SUBCASE("opening is anti-extensive") {
    Rng rng(8);
    for (int t = 0; t < 40; ++t) {
      const auto m = test::random_mask(rng, 20, 16, 0.6);
      for (int r : {1, 2, 3}) {
        const auto o = binary_open(m, r);
        for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(o[i] <= m[i]);
      }
    }
  }
}

TEST_CASE("remove_small") {
  BinaryMask m(20, 20);
  test::add_rect(m, 0, 0, 2, 0);   // 3 px
  test::add_rect(m, 5, 5, 14, 9);  // 50 px
  SUBCASE("min_area 0 keeps everything") { CHECK(remove_small(m, 0) == m); }
  SUBCASE("only the large component survives") {
    const auto r = remove_small(m, 10);
    CHECK(test::count(r) == 50);
    CHECK(r(0, 0) == 0);
    CHECK(remove_small(r, 10) == r);
  }
  SUBCASE("all background stays background") {
    CHECK(test::count(remove_small(BinaryMask(9, 9), 5)) == 0);
  }
  SUBCASE("diagonal pixels form one 8-connected component") {
    BinaryMask d(4, 4);
    for (int i = 0; i < 4; ++i) d(i, i) = 1;
    CHECK(test::count(remove_small(d, 4)) == 4);
    CHECK(test::count(remove_small(d, 5)) == 0);
  }
}

TEST_CASE("default chain recovers synthetic foreground") {
  SynthConfig cfg;
  double acc = 0;
  long long count_error = 0;
  for (int i = 0; i < 5; ++i) {
    cfg.seed = image_seed(7, i);
    const auto img = generate(cfg);
    const auto mask = postprocess(img.prob, PostprocParams{});
    acc += pixel_metrics(mask, foreground(img.truth.labels)).acc;
    count_error += std::abs(max_label(connected_components(mask)) -
                            max_label(img.truth.components));
  }
  CHECK(acc / 5 >= 0.99);
  CHECK(count_error == 0);
}
