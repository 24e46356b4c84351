#include "braintalker/plot.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace bt::plot {

namespace {

constexpr Index kCellW = 4, kCellH = 6;
constexpr Index kMarginLeft = 6, kMarginTop = 6, kMarginRight = 14;
constexpr Index kAxisH = 20;  // tick mark + gap + 5x7 glyphs + breathing room

// dark-to-bright perceptually ordered ramp (viridis-like anchor points)
constexpr unsigned char kRamp[9][3] = {
    {68, 1, 84},   {71, 44, 122},  {59, 81, 139},  {44, 113, 142}, {33, 144, 141},
    {39, 173, 129}, {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};

// 5x7 glyphs, bit 4 = leftmost column
struct Glyph {
  char ch;
  unsigned char rows[7];
};
constexpr Glyph kFont[] = {
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
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
};

const unsigned char* glyph_rows(char ch) {
  for (const Glyph& g : kFont)
    if (g.ch == ch) return g.rows;
  return nullptr;
}

void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(char((v >> 24) & 0xFF));
  out.push_back(char((v >> 16) & 0xFF));
  out.push_back(char((v >> 8) & 0xFF));
  out.push_back(char(v & 0xFF));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
  append_be32(out, std::uint32_t(data.size()));
  const std::size_t crc_start = out.size();
  out.append(type, 4);
  out.append(data);
  const std::uint32_t crc =
      std::uint32_t(::crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                            uInt(4 + data.size())));
  append_be32(out, crc);
}

class Canvas {
 public:
  Canvas(Index w, Index h) : width_(w), height_(h), rgb_(std::size_t(3 * w * h), 255) {}

  void set(Index x, Index y, const unsigned char* c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    unsigned char* p = rgb_.data() + 3 * (y * width_ + x);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void fill_rect(Index x, Index y, Index w, Index h, const unsigned char* c) {
    for (Index j = y; j < y + h; ++j)
      for (Index i = x; i < x + w; ++i) set(i, j, c);
  }

  void draw_text(Index x, Index y, const std::string& text, const unsigned char* c) {
    for (char ch : text) {
      const unsigned char* rows = glyph_rows(ch);
      if (rows) {
        for (int r = 0; r < 7; ++r)
          for (int col = 0; col < 5; ++col)
            if (rows[r] & (0x10 >> col)) set(x + col, y + r, c);
      }
      x += 6;  // 5 px glyph + 1 px spacing
    }
  }

  Index width() const { return width_; }
  Index height() const { return height_; }
  const std::vector<unsigned char>& rgb() const { return rgb_; }

 private:
  Index width_, height_;
  std::vector<unsigned char> rgb_;
};

void color_of(double t, unsigned char* out) {
  t = std::min(1.0, std::max(0.0, t));
  const double pos = t * 8.0;
  const int lo = std::min(7, int(pos));
  const double frac = pos - lo;
  for (int k = 0; k < 3; ++k)
    out[k] = (unsigned char)std::lround((1.0 - frac) * kRamp[lo][k] + frac * kRamp[lo + 1][k]);
}

double pick_tick_step(double duration_s) {
  for (double step : {0.05, 0.1, 0.2, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0})
    if (duration_s / step <= 6.0) return step;
  return std::pow(10.0, std::ceil(std::log10(duration_s / 6.0)));
}

std::string format_seconds(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

Layout plan_layout(Index frames, Index bins) {
  require(frames >= 1 && bins >= 1, "plan_layout: need at least one frame and one bin");
  Layout l;
  l.cell_w = kCellW;
  l.cell_h = kCellH;
  l.heat_x = kMarginLeft + 1;  // inside the 1 px frame
  l.heat_y = kMarginTop + 1;
  l.heat_w = frames * kCellW;
  l.heat_h = bins * kCellH;
  l.width = l.heat_x + l.heat_w + 1 + kMarginRight;
  l.height = l.heat_y + l.heat_h + 1 + kAxisH;
  return l;
}

Layout render_mel_png(const MelSpectrogram& mel, const std::string& png_path) {
  const Index frames = mel.frames(), bins = mel.bins();
  const Layout l = plan_layout(frames, bins);
  Canvas canvas(l.width, l.height);

  const unsigned char black[3] = {0, 0, 0};
  // 1 px frame around the heatmap
  canvas.fill_rect(l.heat_x - 1, l.heat_y - 1, l.heat_w + 2, 1, black);
  canvas.fill_rect(l.heat_x - 1, l.heat_y + l.heat_h, l.heat_w + 2, 1, black);
  canvas.fill_rect(l.heat_x - 1, l.heat_y - 1, 1, l.heat_h + 2, black);
  canvas.fill_rect(l.heat_x + l.heat_w, l.heat_y - 1, 1, l.heat_h + 2, black);

  const double vmin = double(mel.values.minCoeff());
  const double vmax = double(mel.values.maxCoeff());
  const double span = vmax - vmin;
  for (Index t = 0; t < frames; ++t)
    for (Index b = 0; b < bins; ++b) {
      unsigned char c[3];
      color_of(span > 1e-12 ? (double(mel.values(t, b)) - vmin) / span : 0.5, c);
      // bin 0 at the bottom, like a spectrogram
      canvas.fill_rect(l.heat_x + t * l.cell_w, l.heat_y + (bins - 1 - b) * l.cell_h, l.cell_w,
                       l.cell_h, c);
    }

  // time axis: frame t starts at t * 10 ms
  const double duration = double(frames) * 0.010;
  const double step = pick_tick_step(duration);
  const Index axis_y = l.heat_y + l.heat_h + 1;
  for (int k = 0;; ++k) {
    const double t_s = k * step;
    if (t_s > duration + 1e-9) break;
    const Index x = l.heat_x + Index(std::lround(t_s / 0.010)) * l.cell_w;
    if (x > l.heat_x + l.heat_w) break;
    canvas.fill_rect(x, axis_y, 1, 3, black);
    canvas.draw_text(x - 2, axis_y + 5, format_seconds(t_s), black);
  }
  canvas.draw_text(l.heat_x + l.heat_w + 4, axis_y + 5, "s", black);

  write_png_rgb8(png_path, canvas.width(), canvas.height(), canvas.rgb());
  return l;
}

void write_png_rgb8(const std::string& path, Index width, Index height,
                    const std::vector<unsigned char>& rgb) {
  require(width >= 1 && height >= 1, "write_png_rgb8: empty image");
  require(Index(rgb.size()) == 3 * width * height,
          "write_png_rgb8: pixel buffer size does not match dimensions");

  // raw scanlines, filter type 0 per row
  std::string raw;
  raw.reserve(std::size_t(height) * (1 + std::size_t(3 * width)));
  for (Index y = 0; y < height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(rgb.data() + 3 * y * width),
               std::size_t(3 * width));
  }
  uLongf compressed_size = ::compressBound(uLong(raw.size()));
  std::string compressed(compressed_size, '\0');
  const int rc = ::compress2(reinterpret_cast<Bytef*>(compressed.data()), &compressed_size,
                             reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 6);
  require(rc == Z_OK, "write_png_rgb8: zlib compress failed");
  compressed.resize(compressed_size);

  std::string out;
  out.append("\x89PNG\r\n\x1A\n", 8);
  std::string ihdr;
  append_be32(ihdr, std::uint32_t(width));
  append_be32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_png_rgb8: cannot open " + path);
  f.write(out.data(), std::streamsize(out.size()));
  require(f.good(), "write_png_rgb8: write failed for " + path);
}

Image decode_png_rgb8(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "decode_png_rgb8: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(buf.size() >= 8 && std::memcmp(buf.data(), "\x89PNG\r\n\x1A\n", 8) == 0,
          "decode_png_rgb8: " + path + " is not a PNG");

  auto read_be32 = [&buf](std::size_t at) {
    return (std::uint32_t(std::uint8_t(buf[at])) << 24) |
           (std::uint32_t(std::uint8_t(buf[at + 1])) << 16) |
           (std::uint32_t(std::uint8_t(buf[at + 2])) << 8) |
           std::uint32_t(std::uint8_t(buf[at + 3]));
  };

  Image img;
  std::string idat;
  std::size_t pos = 8;
  while (pos + 12 <= buf.size()) {
    const std::uint32_t len = read_be32(pos);
    const std::string type = buf.substr(pos + 4, 4);
    require(pos + 12 + len <= buf.size(), "decode_png_rgb8: truncated chunk in " + path);
    const char* data = buf.data() + pos + 8;
    if (type == "IHDR") {
      require(len == 13, "decode_png_rgb8: bad IHDR in " + path);
      img.width = Index(read_be32(pos + 8));
      img.height = Index(read_be32(pos + 12));
      require(data[8] == 8 && data[9] == 2 && data[12] == 0,
              "decode_png_rgb8: only 8-bit RGB non-interlaced supported");
    } else if (type == "IDAT") {
      idat.append(data, len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  require(img.width >= 1 && img.height >= 1 && !idat.empty(),
          "decode_png_rgb8: missing IHDR/IDAT in " + path);

  const std::size_t stride = 1 + std::size_t(3 * img.width);
  std::vector<unsigned char> raw(std::size_t(img.height) * stride);
  uLongf raw_size = uLongf(raw.size());
  const int rc = ::uncompress(raw.data(), &raw_size, reinterpret_cast<const Bytef*>(idat.data()),
                              uLong(idat.size()));
  require(rc == Z_OK && raw_size == raw.size(), "decode_png_rgb8: zlib inflate failed for " + path);

  img.rgb.resize(std::size_t(3 * img.width * img.height));
  for (Index y = 0; y < img.height; ++y) {
    require(raw[std::size_t(y) * stride] == 0,
            "decode_png_rgb8: unsupported filter type in " + path);
    std::memcpy(img.rgb.data() + 3 * y * img.width, raw.data() + std::size_t(y) * stride + 1,
                std::size_t(3 * img.width));
  }
  return img;
}

}  // namespace bt::plot
