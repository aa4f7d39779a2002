#include "hacbsr/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "hacbsr/image_io.hpp"

namespace hacbsr::plot {

namespace {

constexpr int kGlyphW = 3;
constexpr int kGlyphH = 5;

// Rows top to bottom, three columns each.
const std::map<char, const char*>& glyphs() {
  static const std::map<char, const char*> g = {
      {'0', "111101101101111"}, {'1', "010110010010111"}, {'2', "111001111100111"}, {'3', "111001111001111"},
      {'4', "101101111001001"}, {'5', "111100111001111"}, {'6', "111100111101111"}, {'7', "111001001010010"},
      {'8', "111101111101111"}, {'9', "111101111001111"}, {'A', "010101111101101"}, {'B', "110101110101110"},
      {'C', "011100100100011"}, {'D', "110101101101110"}, {'E', "111100110100111"}, {'F', "111100110100100"},
      {'G', "011100101101011"}, {'H', "101101111101101"}, {'I', "111010010010111"}, {'J', "001001001101010"},
      {'K', "101101110101101"}, {'L', "100100100100111"}, {'M', "101111111101101"}, {'N', "110101101101101"},
      {'O', "010101101101010"}, {'P', "110101110100100"}, {'Q', "010101101110011"}, {'R', "110101110101101"},
      {'S', "011100010001110"}, {'T', "111010010010010"}, {'U', "101101101101111"}, {'V', "101101101101010"},
      {'W', "101101111111101"}, {'X', "101101010101101"}, {'Y', "101101010010010"}, {'Z', "111001010100111"},
      {'.', "000000000000010"}, {'-', "000000111000000"}, {'+', "000010111010000"}, {'=', "000111000111000"},
      {':', "000010000010000"}, {'(', "001010010010001"}, {')', "100010010010100"}, {'/', "001001010100100"},
      {'_', "000000000000111"}, {',', "000000000010100"}, {'|', "010010010010010"}, {'%', "101001010100101"},
      {'<', "001010100010001"}, {'>', "100010001010100"}, {'[', "011010010010011"}, {']', "110010010010110"},
  };
  return g;
}

std::string tick_label(double v) {
  char buf[32];
  if (v == 0.0) return "0";
  const double a = std::fabs(v);
  if (a >= 1e-3 && a < 1e5) {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  }
  return buf;
}

std::vector<double> linear_ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::fabs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> t;
  for (int e = static_cast<int>(std::ceil(std::log10(lo) - 1e-9)); e <= static_cast<int>(std::floor(std::log10(hi) + 1e-9)); ++e)
    t.push_back(std::pow(10.0, e));
  return t;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v, bool log) {
    if (!std::isfinite(v) || (log && !(v > 0.0))) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(bool log) {
    if (!std::isfinite(lo)) {
      lo = log ? 1.0 : 0.0;
      hi = log ? 10.0 : 1.0;
    }
    if (log) {
      lo = std::pow(10.0, std::floor(std::log10(lo)));
      hi = std::pow(10.0, std::ceil(std::log10(hi)));
      if (hi <= lo) hi = lo * 10.0;
    } else if (hi - lo <= 0.0) {
      const double pad = lo == 0.0 ? 1.0 : 0.1 * std::fabs(lo);
      lo -= pad;
      hi += pad;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }
};

void draw_axes(Canvas& c, const Frame& f, const Axes& axes, bool x_ticks = true) {
  c.rect(f.left, f.top, f.right, f.bottom, 0.0, false);
  const auto xt = f.log_x ? log_ticks(f.x_min, f.x_max) : linear_ticks(f.x_min, f.x_max);
  const auto yt = f.log_y ? log_ticks(f.y_min, f.y_max) : linear_ticks(f.y_min, f.y_max);
  if (x_ticks) {
    for (double t : xt) {
      const double x = f.px(t);
      c.line(x, f.bottom, x, f.bottom + 4, 0.0);
      c.line(x, f.top + 1, x, f.bottom - 1, 0.9);
      const std::string s = tick_label(t);
      c.text(static_cast<Index>(x) - Canvas::text_width(s) / 2, f.bottom + 7, s, 0.0);
    }
  }
  for (double t : yt) {
    const double y = f.py(t);
    c.line(f.left - 4, y, f.left, y, 0.0);
    c.line(f.left + 1, y, f.right - 1, y, 0.9);
    const std::string s = tick_label(t);
    c.text(f.left - 7 - Canvas::text_width(s), static_cast<Index>(y) - 2, s, 0.0);
  }
  c.rect(f.left, f.top, f.right, f.bottom, 0.0, false);
  c.text((f.left + f.right) / 2 - Canvas::text_width(axes.title, 2) / 2, 8, axes.title, 0.0, 2);
  c.text((f.left + f.right) / 2 - Canvas::text_width(axes.x_label) / 2, f.bottom + 20, axes.x_label, 0.0);
  c.text(4, f.top - 12, axes.y_label, 0.0);
}

Frame make_frame(const Canvas& c) {
  Frame f;
  f.left = 70;
  f.top = 36;
  f.right = c.width() - 16;
  f.bottom = c.height() - 36;
  return f;
}

}  // namespace

Canvas::Canvas(Index width, Index height) : pixels_(Image<double>::Ones(height, width)) {
  if (width < 120 || height < 100) throw ArgumentError("plot canvas must be at least 120x100 pixels");
}

void Canvas::set(Index x, Index y, double gray) {
  if (x < 0 || y < 0 || x >= width() || y >= height()) return;
  pixels_(y, x) = std::min(pixels_(y, x), gray);
}

void Canvas::line(double x0, double y0, double x1, double y1, double gray) {
  if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(x1) || !std::isfinite(y1)) return;
  const double n = std::max({std::fabs(x1 - x0), std::fabs(y1 - y0), 1.0});
  const int steps = static_cast<int>(std::ceil(n));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set(static_cast<Index>(std::lround(x0 + t * (x1 - x0))), static_cast<Index>(std::lround(y0 + t * (y1 - y0))), gray);
  }
}

void Canvas::rect(Index x0, Index y0, Index x1, Index y1, double gray, bool fill) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (Index y = y0; y <= y1; ++y)
    for (Index x = x0; x <= x1; ++x)
      if (fill || y == y0 || y == y1 || x == x0 || x == x1) set(x, y, gray);
}

void Canvas::marker(double x, double y, double gray) {
  if (!std::isfinite(x) || !std::isfinite(y)) return;
  const Index cx = static_cast<Index>(std::lround(x));
  const Index cy = static_cast<Index>(std::lround(y));
  rect(cx - 2, cy - 2, cx + 2, cy + 2, gray, true);
}

Index Canvas::text_width(const std::string& s, int scale) {
  return s.empty() ? 0 : static_cast<Index>(s.size()) * (kGlyphW + 1) * scale - scale;
}

Index Canvas::text(Index x, Index y, const std::string& s, double gray, int scale) {
  Index cx = x;
  for (char ch : s) {
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const auto it = glyphs().find(up);
    if (it != glyphs().end()) {
      for (int r = 0; r < kGlyphH; ++r)
        for (int col = 0; col < kGlyphW; ++col)
          if (it->second[r * kGlyphW + col] == '1')
            rect(cx + col * scale, y + r * scale, cx + (col + 1) * scale - 1, y + (r + 1) * scale - 1, gray, true);
    }
    cx += (kGlyphW + 1) * scale;
  }
  return text_width(s, scale);
}

double Frame::px(double x) const {
  const double t = log_x ? (std::log10(x) - std::log10(x_min)) / (std::log10(x_max) - std::log10(x_min))
                         : (x - x_min) / (x_max - x_min);
  return left + t * (right - left);
}

double Frame::py(double y) const {
  const double t = log_y ? (std::log10(y) - std::log10(y_min)) / (std::log10(y_max) - std::log10(y_min))
                         : (y - y_min) / (y_max - y_min);
  return bottom - t * (bottom - top);
}

Canvas line_chart(const std::vector<Series>& series, const Axes& axes, Index width, Index height) {
  Canvas c(width, height);
  Frame f = make_frame(c);
  f.log_x = axes.log_x;
  f.log_y = axes.log_y;
  Range rx, ry;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ArgumentError("series '" + s.label + "' has mismatched x and y lengths");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if ((f.log_x && !(s.x[i] > 0)) || (f.log_y && !(s.y[i] > 0))) continue;
      rx.add(s.x[i], f.log_x);
      ry.add(s.y[i], f.log_y);
    }
  }
  rx.finish(f.log_x);
  ry.finish(f.log_y);
  f.x_min = rx.lo;
  f.x_max = rx.hi;
  f.y_min = ry.lo;
  f.y_max = ry.hi;
  draw_axes(c, f, axes);

  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!f.log_x || x > 0) && (!f.log_y || y > 0);
  };
  Index legend_y = f.top + 6;
  for (const auto& s : series) {
    bool have_prev = false;
    double px0 = 0, py0 = 0;
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) {
        have_prev = false;
        continue;
      }
      const double px = f.px(s.x[i]);
      const double py = f.py(s.y[i]);
      if (s.line && have_prev) c.line(px0, py0, px, py, s.gray);
      if (s.markers) c.marker(px, py, s.gray);
      px0 = px;
      py0 = py;
      have_prev = true;
    }
    if (!s.label.empty()) {
      const Index lx = f.right - 8 - Canvas::text_width(s.label) - 22;
      if (s.line) c.line(lx, legend_y + 2, lx + 14, legend_y + 2, s.gray);
      if (s.markers) c.marker(lx + 7, legend_y + 2, s.gray);
      c.text(lx + 20, legend_y, s.label, 0.0);
      legend_y += 10;
    }
  }
  return c;
}

Canvas bar_chart(const std::vector<std::vector<Bar>>& groups, const Axes& axes, Index width, Index height) {
  Canvas c(width, height);
  Frame f = make_frame(c);
  Range ry;
  ry.add(0.0, false);
  for (const auto& g : groups)
    for (const auto& b : g) ry.add(b.value, false);
  ry.finish(false);
  f.x_min = 0.0;
  f.x_max = std::max<double>(1.0, static_cast<double>(groups.size()));
  f.y_min = ry.lo;
  f.y_max = ry.hi;
  draw_axes(c, f, axes, false);
  const double slot = static_cast<double>(f.right - f.left) / f.x_max;
  const double zero = f.py(0.0);
  const size_t label_every = std::max<size_t>(1, groups.size() / 10);
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const double x0 = f.left + gi * slot + 0.1 * slot;
    const double bw = g.empty() ? 0.0 : 0.8 * slot / static_cast<double>(g.size());
    for (size_t bi = 0; bi < g.size(); ++bi) {
      if (!std::isfinite(g[bi].value)) continue;
      const Index bx0 = static_cast<Index>(std::lround(x0 + bi * bw));
      const Index bx1 = std::max(bx0, static_cast<Index>(std::lround(x0 + (bi + 1) * bw)) - 1);
      c.rect(bx0, static_cast<Index>(std::lround(zero)), bx1, static_cast<Index>(std::lround(f.py(g[bi].value))),
             g[bi].gray, true);
    }
    if (gi % label_every == 0) {
      const std::string s = std::to_string(gi + 1);
      c.text(static_cast<Index>(x0 + 0.4 * slot) - Canvas::text_width(s) / 2, f.bottom + 7, s, 0.0);
    }
  }
  c.line(f.left, zero, f.right, zero, 0.0);
  return c;
}

void save(const Canvas& canvas, const std::filesystem::path& path) { write_png(path, canvas.pixels(), 8); }

}  // namespace hacbsr::plot
