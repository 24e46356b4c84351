// braintalker/plot.hpp
//
// Mel-spectrogram heatmap rendering. Produces an RGB8 PNG with time on the
// horizontal axis (tick labels in seconds) and mel bins on the vertical axis,
// one cell_w x cell_h pixel block per mel cell. The layout is exposed so
// callers and tests can locate the heatmap region exactly; decode_png_rgb8
// reads back files produced by write_png_rgb8 for pixel-level checks.

#pragma once

#include "braintalker/types.hpp"

#include <string>
#include <vector>

namespace bt::plot {

struct Layout {
  Index cell_w = 0, cell_h = 0;    // pixels per mel cell
  Index heat_x = 0, heat_y = 0;    // top-left pixel of the heatmap region
  Index heat_w = 0, heat_h = 0;    // heatmap region size (frames*cell_w, bins*cell_h)
  Index width = 0, height = 0;     // full image size
};

Layout plan_layout(Index frames, Index bins);

// Renders mel (frames x bins) and writes the PNG; returns the layout used.
// Bin 0 is drawn at the bottom of the heatmap, time runs left to right.
Layout render_mel_png(const MelSpectrogram& mel, const std::string& png_path);

// Minimal PNG I/O (8-bit RGB, no interlace). rgb is row-major top-down,
// 3 bytes per pixel. The decoder accepts exactly what the writer emits.
void write_png_rgb8(const std::string& path, Index width, Index height,
                    const std::vector<unsigned char>& rgb);

struct Image {
  Index width = 0, height = 0;
  std::vector<unsigned char> rgb;

  const unsigned char* at(Index x, Index y) const { return rgb.data() + 3 * (y * width + x); }
};

Image decode_png_rgb8(const std::string& path);

}  // namespace bt::plot
