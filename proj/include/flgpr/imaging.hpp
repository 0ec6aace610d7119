#pragma once

// Self-contained PNG output (stored-deflate zlib stream, no external codec)
// plus a small raster canvas with a 5x7 font for ROC plots and pAUC bar
// charts. Output bytes are a pure function of the input, so figure artifacts
// are reproducible.

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/serialize.hpp"

namespace flgpr {

namespace detail {

inline std::uint32_t png_crc32(const std::uint8_t* data, std::size_t n,
                               std::uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

inline void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                       const std::vector<std::uint8_t>& data) {
  push_be32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  push_be32(out, png_crc32(body.data(), body.size()) ^ 0xffffffffu);
}

/// zlib stream holding the raw bytes in stored (uncompressed) deflate blocks.
inline std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> out;
  out.push_back(0x78);
  out.push_back(0x01);
  std::size_t pos = 0;
  do {
    const std::size_t len = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool final_block = pos + len == raw.size();
    out.push_back(final_block ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(len & 0xff));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(~len & 0xff));
    out.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    out.insert(out.end(), raw.begin() + pos, raw.begin() + pos + len);
    pos += len;
  } while (pos < raw.size());
  push_be32(out, adler32(raw.data(), raw.size()));
  return out;
}

inline void write_png(const std::string& path, int width, int height, int channels,
                      const std::uint8_t* pixels) {
  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  push_be32(ihdr, static_cast<std::uint32_t>(width));
  push_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);            // gray or truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  push_chunk(png, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * channels));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    const std::uint8_t* row = pixels + static_cast<std::size_t>(r) * width * channels;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * channels);
  }
  push_chunk(png, "IDAT", zlib_stored(raw));
  push_chunk(png, "IEND", {});

  BinaryWriter w(path);
  w.bytes(png.data(), png.size());
  w.close();
}

}  // namespace detail

/// Grayscale PNG of an image with values in [0, 1] (clamped).
inline void write_png_gray(const ImageF& img, const std::string& path) {
  std::vector<std::uint8_t> pixels(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  detail::write_png(path, img.cols(), img.rows(), 1, pixels.data());
}

/// Min-max stretch of an arbitrary real image to [0, 1]; constant images map
/// to mid-gray.
inline ImageF minmax_stretch(const ImageF& img) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < img.size(); ++i) {
    lo = std::min(lo, img.data()[i]);
    hi = std::max(hi, img.data()[i]);
  }
  ImageF out(img.rows(), img.cols());
  if (!(hi > lo)) {
    for (auto& v : out.storage()) v = 0.5;
    return out;
  }
  for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = (img.data()[i] - lo) / (hi - lo);
  return out;
}

// ---------------------------------------------------------------------------
// Canvas + tiny font
// ---------------------------------------------------------------------------

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255})
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3) {
    for (int i = 0; i < width * height; ++i) set_index(i, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) return;
    set_index(y * width_ + x, c);
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }

  void draw_line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void draw_text(int x, int y, const std::string& text, Rgb c) {
    int cx = x;
    for (char raw : text) {
      const char ch = raw >= 'a' && raw <= 'z' ? static_cast<char>(raw - 'a' + 'A') : raw;
      const std::array<std::uint8_t, 7>& glyph = glyph_for(ch);
      for (int gr = 0; gr < 7; ++gr)
        for (int gc = 0; gc < 5; ++gc)
          if (glyph[gr] & (1 << (4 - gc))) set(cx + gc, y + gr, c);
      cx += 6;
    }
  }

  void save_png(const std::string& path) const {
    detail::write_png(path, width_, height_, 3, pixels_.data());
  }

 private:
  void set_index(int i, Rgb c) {
    pixels_[static_cast<std::size_t>(i) * 3] = c.r;
    pixels_[static_cast<std::size_t>(i) * 3 + 1] = c.g;
    pixels_[static_cast<std::size_t>(i) * 3 + 2] = c.b;
  }

  static const std::array<std::uint8_t, 7>& glyph_for(char ch) {
    static const std::array<std::uint8_t, 7> kBlank{};
    struct Entry {
      char ch;
      std::array<std::uint8_t, 7> rows;
    };
    static const std::vector<Entry> kFont = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
        {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
        {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
        {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
        {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
        {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
        {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
        {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
        {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
        {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
        {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
        {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
        {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
        {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
        {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
        {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
        {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
        {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
        {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}},
        {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0a, 0x04, 0x04, 0x04}},
        {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
        {'-', {0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
        {'%', {0x19, 0x1a, 0x02, 0x04, 0x08, 0x0b, 0x13}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
        {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    };
    for (const Entry& e : kFont)
      if (e.ch == ch) return e.rows;
    return kBlank;
  }

  int width_, height_;
  std::vector<std::uint8_t> pixels_;
};

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

inline const std::vector<Rgb>& plot_palette() {
  static const std::vector<Rgb> palette = {
      {31, 119, 180}, {214, 39, 40}, {44, 160, 44},  {148, 103, 189},
      {255, 127, 14}, {140, 86, 75}, {227, 119, 194}, {23, 190, 207}};
  return palette;
}

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band_lo;  // optional CI band
  std::vector<double> band_hi;
};

/// Detection-rate vs FAR line plot with optional CI bands and a legend.
inline void plot_roc_png(const std::vector<PlotSeries>& series, double far_max,
                         const std::string& path) {
  const int width = 720, height = 520;
  const int ml = 70, mr = 20, mt = 30, mb = 50;
  Canvas canvas(width, height);
  const Rgb black{0, 0, 0}, gray{210, 210, 210};

  const int px0 = ml, px1 = width - mr, py0 = height - mb, py1 = mt;
  auto map_x = [&](double far) {
    return px0 + static_cast<int>(std::lround((far / far_max) * (px1 - px0)));
  };
  auto map_y = [&](double pd) {
    return py0 - static_cast<int>(std::lround(pd * (py0 - py1)));
  };

  for (int i = 0; i <= 10; ++i) {
    const int y = map_y(i / 10.0);
    canvas.draw_line(px0, y, px1, y, gray);
    char label[16];
    std::snprintf(label, sizeof(label), "%.1f", i / 10.0);
    canvas.draw_text(px0 - 28, y - 3, label, black);
  }
  for (int i = 0; i <= 4; ++i) {
    const double far = far_max * i / 4.0;
    const int x = map_x(far);
    canvas.draw_line(x, py0, x, py1, gray);
    char label[16];
    std::snprintf(label, sizeof(label), "%.3f", far);
    canvas.draw_text(x - 15, py0 + 8, label, black);
  }
  canvas.draw_line(px0, py0, px1, py0, black);
  canvas.draw_line(px0, py0, px0, py1, black);
  canvas.draw_text(px0 + (px1 - px0) / 2 - 40, height - 14, "FAR (FA/M2)", black);
  canvas.draw_text(6, py1 - 10, "PD", black);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb color = plot_palette()[s % plot_palette().size()];
    const PlotSeries& ps = series[s];
    if (!ps.band_lo.empty() && ps.band_lo.size() == ps.x.size()) {
      const Rgb band{static_cast<std::uint8_t>(255 - (255 - color.r) / 4),
                     static_cast<std::uint8_t>(255 - (255 - color.g) / 4),
                     static_cast<std::uint8_t>(255 - (255 - color.b) / 4)};
      for (std::size_t i = 0; i + 1 < ps.x.size(); ++i) {
        const int xa = map_x(ps.x[i]), xb = map_x(ps.x[i + 1]);
        for (int x = xa; x <= xb; ++x) {
          const double t = xb > xa ? static_cast<double>(x - xa) / (xb - xa) : 0.0;
          const double lo = ps.band_lo[i] + t * (ps.band_lo[i + 1] - ps.band_lo[i]);
          const double hi = ps.band_hi[i] + t * (ps.band_hi[i + 1] - ps.band_hi[i]);
          for (int y = map_y(std::min(1.0, hi)); y <= map_y(std::max(0.0, lo)); ++y)
            canvas.set(x, y, band);
        }
      }
    }
    for (std::size_t i = 0; i + 1 < ps.x.size(); ++i)
      canvas.draw_line(map_x(ps.x[i]), map_y(ps.y[i]), map_x(ps.x[i + 1]),
                       map_y(ps.y[i + 1]), color);
    const int ly = py1 + 12 * static_cast<int>(s);
    canvas.draw_line(px1 - 150, ly, px1 - 130, ly, color);
    canvas.draw_text(px1 - 124, ly - 3, ps.name, black);
  }
  canvas.save_png(path);
}

/// Generic line plot on explicit axis ranges (used for the fusion N_f sweep).
inline void plot_xy_png(const std::vector<PlotSeries>& series, double x_min, double x_max,
                        double y_min, double y_max, const std::string& x_label,
                        const std::string& y_label, const std::string& path) {
  const int width = 720, height = 520;
  const int ml = 70, mr = 20, mt = 30, mb = 50;
  Canvas canvas(width, height);
  const Rgb black{0, 0, 0}, gray{210, 210, 210};
  const int px0 = ml, px1 = width - mr, py0 = height - mb, py1 = mt;
  const double x_span = x_max > x_min ? x_max - x_min : 1.0;
  const double y_span = y_max > y_min ? y_max - y_min : 1.0;
  auto map_x = [&](double x) {
    return px0 + static_cast<int>(std::lround((x - x_min) / x_span * (px1 - px0)));
  };
  auto map_y = [&](double y) {
    return py0 - static_cast<int>(std::lround((y - y_min) / y_span * (py0 - py1)));
  };
  for (int i = 0; i <= 10; ++i) {
    const double y = y_min + y_span * i / 10.0;
    canvas.draw_line(px0, map_y(y), px1, map_y(y), gray);
    char label[16];
    std::snprintf(label, sizeof(label), "%.2f", y);
    canvas.draw_text(px0 - 34, map_y(y) - 3, label, black);
  }
  for (int i = 0; i <= 8; ++i) {
    const double x = x_min + x_span * i / 8.0;
    canvas.draw_line(map_x(x), py0, map_x(x), py1, gray);
    char label[16];
    std::snprintf(label, sizeof(label), "%g", x);
    canvas.draw_text(map_x(x) - 6, py0 + 8, label, black);
  }
  canvas.draw_line(px0, py0, px1, py0, black);
  canvas.draw_line(px0, py0, px0, py1, black);
  canvas.draw_text(px0 + (px1 - px0) / 2 - 3 * static_cast<int>(x_label.size()),
                   height - 14, x_label, black);
  canvas.draw_text(6, py1 - 10, y_label, black);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb color = plot_palette()[s % plot_palette().size()];
    const PlotSeries& ps = series[s];
    if (!ps.band_lo.empty() && ps.band_lo.size() == ps.x.size()) {
      for (std::size_t i = 0; i < ps.x.size(); ++i) {
        const int x = map_x(ps.x[i]);
        canvas.draw_line(x, map_y(ps.band_lo[i]), x, map_y(ps.band_hi[i]), color);
        canvas.draw_line(x - 2, map_y(ps.band_lo[i]), x + 2, map_y(ps.band_lo[i]), color);
        canvas.draw_line(x - 2, map_y(ps.band_hi[i]), x + 2, map_y(ps.band_hi[i]), color);
      }
    }
    for (std::size_t i = 0; i + 1 < ps.x.size(); ++i)
      canvas.draw_line(map_x(ps.x[i]), map_y(ps.y[i]), map_x(ps.x[i + 1]),
                       map_y(ps.y[i + 1]), color);
    const int ly = py1 + 12 * static_cast<int>(s);
    canvas.draw_line(px1 - 150, ly, px1 - 130, ly, color);
    canvas.draw_text(px1 - 124, ly - 3, ps.name, black);
  }
  canvas.save_png(path);
}

struct BarEntry {
  std::string label;
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Horizontal pAUC bar chart with CI whiskers.
inline void plot_bars_png(const std::vector<BarEntry>& entries, const std::string& title,
                          const std::string& path) {
  const int row_h = 16;
  const int ml = 190, mr = 50, mt = 30, mb = 30;
  const int width = 720;
  const int height = mt + mb + row_h * std::max<int>(1, static_cast<int>(entries.size()));
  Canvas canvas(width, height);
  const Rgb black{0, 0, 0}, gray{210, 210, 210};

  const int px0 = ml, px1 = width - mr;
  auto map_x = [&](double v) {
    return px0 + static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * (px1 - px0)));
  };
  canvas.draw_text(px0, 10, title, black);
  for (int i = 0; i <= 10; ++i) {
    const int x = map_x(i / 10.0);
    canvas.draw_line(x, mt, x, height - mb, gray);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const int y = mt + static_cast<int>(i) * row_h;
    const Rgb color = plot_palette()[i % plot_palette().size()];
    canvas.draw_text(4, y + 3, entries[i].label, black);
    canvas.fill_rect(px0, y + 2, map_x(entries[i].value), y + row_h - 4, color);
    const int yc = y + row_h / 2;
    canvas.draw_line(map_x(entries[i].ci_lo), yc, map_x(entries[i].ci_hi), yc, black);
    canvas.draw_line(map_x(entries[i].ci_lo), yc - 2, map_x(entries[i].ci_lo), yc + 2, black);
    canvas.draw_line(map_x(entries[i].ci_hi), yc - 2, map_x(entries[i].ci_hi), yc + 2, black);
  }
  canvas.draw_line(px0, height - mb, px1, height - mb, black);
  canvas.draw_text(px0, height - mb + 6, "0", black);
  canvas.draw_text(px1 - 18, height - mb + 6, "1.0", black);
  canvas.save_png(path);
}

}  // namespace flgpr
