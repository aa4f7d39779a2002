#include "hacbsr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <vector>

namespace hacbsr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path.string(), "cannot open file");
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* path = static_cast<const std::string*>(png_get_error_ptr(png));
  throw IoError(path ? *path : std::string(), std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image<double> read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path.string(), "not a PNG file");
  const std::string where = path.string();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, const_cast<std::string*>(&where), png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info), height = png_get_image_height(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buffer(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 i = 0; i < height; ++i) rows[i] = buffer.data() + i * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  Image<double> img(height, width);
  for (png_uint_32 i = 0; i < height; ++i) {
    for (png_uint_32 j = 0; j < width; ++j) {
      if (out_depth == 16) {
        std::uint16_t v;
        std::memcpy(&v, rows[i] + 2 * j, 2);
        img(i, j) = v / 65535.0;
      } else {
        img(i, j) = rows[i][j] / 255.0;
      }
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image<double>& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ArgumentError("PNG bit depth must be 8 or 16");
  FilePtr f = open_file(path, "wb");
  const std::string where = path.string();
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, const_cast<std::string*>(&where), png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.cols()), static_cast<png_uint_32>(image.rows()), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  const double levels = bit_depth == 16 ? 65535.0 : 255.0;
  const size_t bytes = bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> row(static_cast<size_t>(image.cols()) * bytes);
  for (Index i = 0; i < image.rows(); ++i) {
    for (Index j = 0; j < image.cols(); ++j) {
      const double v = std::clamp(image(i, j), 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * levels));
      if (bit_depth == 16)
        std::memcpy(row.data() + 2 * j, &q, 2);
      else
        row[static_cast<size_t>(j)] = static_cast<unsigned char>(q);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

void write_kernel_csv(const std::filesystem::path& path, const Image<double>& kernel) {
  std::ostringstream os;
  os.precision(17);
  for (Index i = 0; i < kernel.rows(); ++i) {
    for (Index j = 0; j < kernel.cols(); ++j) os << (j ? "," : "") << kernel(i, j);
    os << "\n";
  }
  write_text(path, os.str());
}

Image<double> read_grid_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path.string(), "malformed number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw IoError(path.string(), "ragged CSV rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string(), "empty grid file");
  Image<double> g(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) g(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return g;
}

Kernel<double> read_kernel_csv(const std::filesystem::path& path) {
  try {
    return Kernel<double>(read_grid_csv(path));
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(path.string(), std::string("invalid kernel: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open file for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open file");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace hacbsr
