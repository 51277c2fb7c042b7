#include "ki67/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <unordered_map>

namespace ki67 {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw Error(ErrorKind::Input, std::string("png: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

RasterImage RasterImage::blank(int width, int height, int channels,
                               int bit_depth, std::uint16_t fill) {
  RasterImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.bit_depth = bit_depth;
  img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

RasterImage load_image(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorKind::Input, "cannot open image: " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(ErrorKind::Input, "not a PNG file: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  RasterImage img;
  {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
      png_set_interlace_handling(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && (depth == 8 || depth == 16)) {
      img.channels = 1;
    } else if (color == PNG_COLOR_TYPE_RGB && depth == 8) {
      img.channels = 3;
    } else {
      fail(ErrorKind::Input, "unsupported PNG color type/bit depth in " +
                                 path.string() + " (color " +
                                 std::to_string(color) + ", depth " +
                                 std::to_string(depth) + ")");
    }
    if (depth == 16) png_set_swap(png);  // host little-endian rows
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = depth;
    if (img.width < 1 || img.height < 1) {
      fail(ErrorKind::Input, "empty image: " + path.string());
    }

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(row_bytes * img.height);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const std::size_t samples = static_cast<std::size_t>(img.width) * img.channels;
    img.data.resize(samples * img.height);
    for (int y = 0; y < img.height; ++y) {
      auto* out = img.data.data() + y * samples;
      if (depth == 16) {
        const auto* in = reinterpret_cast<const std::uint16_t*>(rows[y]);
        std::copy(in, in + samples, out);
      } else {
        std::copy(rows[y], rows[y] + samples, out);
      }
    }
  }
  return img;
}

void save_image(const RasterImage& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) {
    fail(ErrorKind::Processing, "save_image: channels must be 1 or 3");
  }
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    fail(ErrorKind::Processing, "save_image: bit depth must be 8 or 16");
  }
  if (image.bit_depth == 16 && image.channels != 1) {
    fail(ErrorKind::Processing, "save_image: 16-bit output is grayscale only");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorKind::Input, "cannot write image: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, image.bit_depth,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (image.bit_depth == 16) png_set_swap(png);

  const std::size_t samples = static_cast<std::size_t>(image.width) * image.channels;
  std::vector<png_byte> row(samples * (image.bit_depth / 8));
  for (int y = 0; y < image.height; ++y) {
    const auto* in = image.data.data() + y * samples;
    if (image.bit_depth == 16) {
      std::copy(in, in + samples, reinterpret_cast<std::uint16_t*>(row.data()));
    } else {
      for (std::size_t i = 0; i < samples; ++i) {
        row[i] = static_cast<png_byte>(std::min<std::uint16_t>(in[i], 255));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  if (std::fflush(file.get()) != 0) {
    fail(ErrorKind::Input, "write failed: " + path.string());
  }
}

void save_label_map(const LabelMap& labels, const std::filesystem::path& path) {
  auto img = RasterImage::blank(labels.width(), labels.height(), 1, 16);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = labels[i];
    if (v < 0 || v > 65535) {
      fail(ErrorKind::Processing,
           "label " + std::to_string(v) + " does not fit a 16-bit PNG");
    }
    img.data[i] = static_cast<std::uint16_t>(v);
  }
  save_image(img, path);
}

LabelMap to_label_map(const RasterImage& image) {
  if (image.channels != 1) {
    fail(ErrorKind::Input, "label image must be single-channel");
  }
  LabelMap out(image.width, image.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.data[i];
  return out;
}

ProbabilityMap to_probability(const RasterImage& image) {
  if (image.channels != 1) {
    fail(ErrorKind::Input, "probability map must be single-channel");
  }
  const double scale = image.max_value();
  ProbabilityMap out(image.width, image.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.data[i] / scale;
  return out;
}

RasterImage from_probability(const ProbabilityMap& prob) {
  auto img = RasterImage::blank(prob.width(), prob.height(), 1, 8);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = std::clamp(prob[i], 0.0, 1.0);
    img.data[i] = static_cast<std::uint16_t>(std::lround(p * 255.0));
  }
  return img;
}

RasterImage mask_to_image(const BinaryMask& mask) {
  auto img = RasterImage::blank(mask.width(), mask.height(), 1, 8);
  for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask[i] ? 255 : 0;
  return img;
}

BinaryMask image_to_mask(const RasterImage& image) {
  if (image.channels != 1) fail(ErrorKind::Input, "mask image must be single-channel");
  BinaryMask out(image.width, image.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.data[i] != 0;
  return out;
}

BinaryMask foreground(const LabelMap& labels) {
  BinaryMask out(labels.width(), labels.height());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] > 0;
  return out;
}

int max_label(const LabelMap& labels) {
  int m = 0;
  for (auto v : labels.data()) m = std::max(m, v);
  return m;
}

LabelMap relabel_sequential(const LabelMap& labels) {
  LabelMap out(labels.width(), labels.height());
  std::unordered_map<std::int32_t, std::int32_t> remap;
  std::int32_t next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = labels[i];
    if (v <= 0) continue;
    auto [it, inserted] = remap.try_emplace(v, next + 1);
    if (inserted) ++next;
    out[i] = it->second;
  }
  return out;
}

}  // namespace ki67
