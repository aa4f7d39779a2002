#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hacbsr/core.hpp"

namespace hacbsr::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  double gray = 0.0;  // 0 black, 1 white
  bool markers = false;
  bool line = true;
};

struct Bar {
  double value = 0.0;
  double gray = 0.3;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// Grayscale raster canvas with a built-in 3x5 bitmap font; values in [0, 1].
class Canvas {
 public:
  Canvas(Index width, Index height);

  Index width() const { return static_cast<Index>(pixels_.cols()); }
  Index height() const { return static_cast<Index>(pixels_.rows()); }
  const Image<double>& pixels() const { return pixels_; }

  void set(Index x, Index y, double gray);
  void line(double x0, double y0, double x1, double y1, double gray);
  void rect(Index x0, Index y0, Index x1, Index y1, double gray, bool fill);
  void marker(double x, double y, double gray);
  /// Text is upper-cased; unsupported glyphs render as blanks. Returns the pixel width.
  Index text(Index x, Index y, const std::string& s, double gray, int scale = 1);
  static Index text_width(const std::string& s, int scale = 1);

 private:
  Image<double> pixels_;
};

/// Pixel-space transform for the plotting area, with optional log axes.
struct Frame {
  Index left = 0, top = 0, right = 0, bottom = 0;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool log_x = false, log_y = false;

  double px(double x) const;
  double py(double y) const;
};

Canvas line_chart(const std::vector<Series>& series, const Axes& axes, Index width = 640, Index height = 400);
Canvas bar_chart(const std::vector<std::vector<Bar>>& groups, const Axes& axes, Index width = 640, Index height = 400);

void save(const Canvas& canvas, const std::filesystem::path& path);

}  // namespace hacbsr::plot
