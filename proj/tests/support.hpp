#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "ki67/raster.hpp"
#include "ki67/rng.hpp"

namespace ki67::test {

inline BinaryMask disc_mask(int w, int h, double cx, double cy, double r) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m(x, y) = 1;
    }
  }
  return m;
}

inline void add_disc(BinaryMask& m, double cx, double cy, double r) {
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m(x, y) = 1;
    }
  }
}

inline void add_rect(BinaryMask& m, int x0, int y0, int x1, int y1) {
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) m(x, y) = 1;
  }
}

inline BinaryMask from_rows(std::initializer_list<const char*> rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(std::string(*rows.begin()).size());
  BinaryMask m(w, h);
  int y = 0;
  for (const char* r : rows) {
    for (int x = 0; x < w; ++x) m(x, y) = r[x] == '#' ? 1 : 0;
    ++y;
  }
  return m;
}

inline BinaryMask random_mask(Rng& rng, int w, int h, double density) {
  BinaryMask m(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < density ? 1 : 0;
  return m;
}

inline long long count(const BinaryMask& m) {
  long long n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) n += m[i] != 0;
  return n;
}

inline ProbabilityMap to_prob(const BinaryMask& m, double fg = 1.0, double bg = 0.0) {
  ProbabilityMap p(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i] ? fg : bg;
  return p;
}

// Scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ki67_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ki67::test
