#pragma once

#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "provoc/common.hpp"
#include "provoc/features.hpp"

namespace provoc {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

struct Image {
  int w = 0, h = 0;
  std::vector<uint8_t> px;  // RGB8 rows top to bottom

  Image(int width, int height, Rgb bg = {255, 255, 255}) : w(width), h(height) {
    px.resize(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) set(x, y, bg);
  }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const size_t i = (static_cast<size_t>(y) * w + x) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set(x, y, c);
  }
};

inline void write_png(const std::string& path, const Image& img) {
  check(img.w > 0 && img.h > 0, "cannot write empty image");
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot write image file: ", path);
  auto chunk = [&](const char* type, const std::vector<uint8_t>& data) {
    uint8_t len[4] = {static_cast<uint8_t>(data.size() >> 24),
                      static_cast<uint8_t>(data.size() >> 16),
                      static_cast<uint8_t>(data.size() >> 8), static_cast<uint8_t>(data.size())};
    os.write(reinterpret_cast<char*>(len), 4);
    os.write(type, 4);
    if (!data.empty()) os.write(reinterpret_cast<const char*>(data.data()),
                                static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    uint8_t cb[4] = {static_cast<uint8_t>(crc >> 24), static_cast<uint8_t>(crc >> 16),
                     static_cast<uint8_t>(crc >> 8), static_cast<uint8_t>(crc)};
    os.write(reinterpret_cast<char*>(cb), 4);
  };

  const uint8_t sig[8] = {137, 'P', 'N', 'G', '\r', '\n', 26, '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<uint8_t> ihdr = {
      static_cast<uint8_t>(img.w >> 24), static_cast<uint8_t>(img.w >> 16),
      static_cast<uint8_t>(img.w >> 8),  static_cast<uint8_t>(img.w),
      static_cast<uint8_t>(img.h >> 24), static_cast<uint8_t>(img.h >> 16),
      static_cast<uint8_t>(img.h >> 8),  static_cast<uint8_t>(img.h),
      8, 2, 0, 0, 0};  // 8-bit truecolor
  chunk("IHDR", ihdr);

  // each scanline prefixed with filter byte 0
  std::vector<uint8_t> raw(static_cast<size_t>(img.h) * (static_cast<size_t>(img.w) * 3 + 1));
  for (int y = 0; y < img.h; ++y) {
    uint8_t* row = raw.data() + static_cast<size_t>(y) * (static_cast<size_t>(img.w) * 3 + 1);
    row[0] = 0;
    std::memcpy(row + 1, img.px.data() + static_cast<size_t>(y) * img.w * 3,
                static_cast<size_t>(img.w) * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> idat(bound);
  check(compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) == Z_OK,
        "png compression failed");
  idat.resize(bound);
  chunk("IDAT", idat);
  chunk("IEND", {});
  check(os.good(), "write failed for ", path);
}

// ---- fixed 8-anchor colormap (dark purple to light yellow) ----

inline Rgb colormap(double v) {
  static const std::array<std::array<double, 3>, 8> anchors = {{{0, 0, 4},
                                                                {28, 16, 68},
                                                                {79, 18, 123},
                                                                {129, 37, 129},
                                                                {181, 54, 122},
                                                                {229, 80, 100},
                                                                {251, 135, 97},
                                                                {252, 253, 191}}};
  v = std::clamp(v, 0.0, 1.0);
  const double pos = v * 7.0;
  const int i = std::min(6, static_cast<int>(pos));
  const double f = pos - i;
  Rgb c;
  c.r = static_cast<uint8_t>(anchors[i][0] + f * (anchors[i + 1][0] - anchors[i][0]) + 0.5);
  c.g = static_cast<uint8_t>(anchors[i][1] + f * (anchors[i + 1][1] - anchors[i][1]) + 0.5);
  c.b = static_cast<uint8_t>(anchors[i][2] + f * (anchors[i + 1][2] - anchors[i][2]) + 0.5);
  return c;
}

// ---- 5x7 bitmap glyphs for axis labels ----

namespace plot_detail {

inline const std::map<char, std::array<uint8_t, 7>>& font() {
  static const std::map<char, std::array<uint8_t, 7>> f = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x13, 0x0D}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}}};
  return f;
}

}  // namespace plot_detail

inline void draw_text(Image& img, int x, int y, const std::string& text, Rgb c) {
  const auto& f = plot_detail::font();
  int cx = x;
  for (char ch : text) {
    auto it = f.find(ch);
    if (it != f.end()) {
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (it->second[row] & (1 << (4 - col))) img.set(cx + col, y + row, c);
    }
    cx += 6;
  }
}

// Natural-log mel values to decibels (power quantities): 10 * log10(e) * L.
inline double logmel_to_db(double logmel) { return 10.0 / std::log(10.0) * logmel; }

// Mel spectrogram heat map: time left to right, band 0 at the bottom, fixed
// 80 dB dynamic range below the peak, colorbar with dB tick labels.
inline Image render_mel_image(const MelSpectrogram& mel) {
  check(mel.frames > 0 && mel.n_mels > 0, "cannot plot an empty mel");
  const int cw = std::clamp(800 / mel.frames, 1, 8);
  const int ch = std::clamp(320 / mel.n_mels, 1, 8);
  const int plot_w = mel.frames * cw, plot_h = mel.n_mels * ch;
  const int margin = 8, bar_w = 16, label_w = 52;
  Image img(margin + plot_w + margin + bar_w + label_w, margin + plot_h + margin);

  double db_max = -1e30;
  for (double v : mel.data) db_max = std::max(db_max, logmel_to_db(v));
  const double db_min = db_max - 80.0;

  for (int t = 0; t < mel.frames; ++t)
    for (int m = 0; m < mel.n_mels; ++m) {
      const double db = logmel_to_db(mel.at(t, m));
      const double v = (db - db_min) / (db_max - db_min);
      const Rgb c = colormap(v);
      const int x0 = margin + t * cw, y0 = margin + (mel.n_mels - 1 - m) * ch;
      img.fill_rect(x0, y0, x0 + cw, y0 + ch, c);
    }

  const int bx = margin + plot_w + margin;
  for (int y = 0; y < plot_h; ++y) {
    const double v = 1.0 - static_cast<double>(y) / std::max(1, plot_h - 1);
    const Rgb c = colormap(v);
    for (int x = 0; x < bar_w; ++x) img.set(bx + x, margin + y, c);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0fdB", db_max);
  draw_text(img, bx + bar_w + 4, margin, buf, {0, 0, 0});
  std::snprintf(buf, sizeof(buf), "%.0fdB", db_min);
  draw_text(img, bx + bar_w + 4, margin + plot_h - 7, buf, {0, 0, 0});
  return img;
}

inline void plot_mel_png(const std::string& path, const MelSpectrogram& mel) {
  write_png(path, render_mel_image(mel));
}

inline const std::array<Rgb, 10>& palette() {
  static const std::array<Rgb, 10> p = {{{31, 119, 180},
                                         {255, 127, 14},
                                         {44, 160, 44},
                                         {214, 39, 40},
                                         {148, 103, 189},
                                         {140, 86, 75},
                                         {227, 119, 194},
                                         {127, 127, 127},
                                         {188, 189, 34},
                                         {23, 190, 207}}};
  return p;
}

// 2-D scatter colored by integer label; points as 3x3 squares, legend keyed
// by label index.
inline Image render_scatter(const std::vector<double>& points, int n,
                            const std::vector<int>& labels) {
  check(n >= 1 && points.size() == static_cast<size_t>(n) * 2, "scatter input size mismatch");
  check(static_cast<int>(labels.size()) == n, "scatter labels size mismatch");
  const int size = 480, margin = 24;
  Image img(size + 80, size);
  img.fill_rect(margin - 1, margin - 1, size - margin + 1, size - margin + 1, {245, 245, 245});

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int i = 0; i < n; ++i) {
    xmin = std::min(xmin, points[i * 2]);
    xmax = std::max(xmax, points[i * 2]);
    ymin = std::min(ymin, points[i * 2 + 1]);
    ymax = std::max(ymax, points[i * 2 + 1]);
  }
  const double xr = xmax - xmin < 1e-12 ? 1.0 : xmax - xmin;
  const double yr = ymax - ymin < 1e-12 ? 1.0 : ymax - ymin;

  int max_label = 0;
  for (int i = 0; i < n; ++i) {
    const int px = margin + static_cast<int>((points[i * 2] - xmin) / xr * (size - 2 * margin));
    const int py = size - margin -
                   static_cast<int>((points[i * 2 + 1] - ymin) / yr * (size - 2 * margin));
    const Rgb c = palette()[static_cast<size_t>(labels[i] % 10)];
    img.fill_rect(px - 1, py - 1, px + 2, py + 2, c);
    max_label = std::max(max_label, labels[i]);
  }
  for (int l = 0; l <= max_label && l < 10; ++l) {
    const int y = margin + l * 14;
    img.fill_rect(size + 8, y, size + 8 + 9, y + 9, palette()[static_cast<size_t>(l)]);
    draw_text(img, size + 22, y + 1, std::to_string(l), {0, 0, 0});
  }
  return img;
}

inline void plot_scatter_png(const std::string& path, const std::vector<double>& points, int n,
                             const std::vector<int>& labels) {
  write_png(path, render_scatter(points, n, labels));
}

}  // namespace provoc
