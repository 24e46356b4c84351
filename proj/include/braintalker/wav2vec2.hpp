// braintalker/wav2vec2.hpp
//
// Inference-only adapter for a pretrained wav2vec2-style speech encoder.
// Weights are read from a local directory holding the project's own exchange
// format (produced by tools/export_wav2vec2.py from a HuggingFace
// checkpoint): an index file `wav2vec2.json` describing the architecture and
// tensor shapes, plus `wav2vec2.bin` with the raw float32 row-major blobs in
// index order. No network access; always frozen.

#pragma once

#include "braintalker/nn.hpp"
#include "braintalker/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bt {

struct Wav2Vec2Config {
  int conv_dim = 512;  // frontend channel width
  int dim = 768;       // transformer width (output latent dim)
  int blocks = 12;
  int heads = 12;
  int ffn_dim = 3072;
  int pos_kernel = 128;  // convolutional position embedding
  int pos_groups = 16;
  std::vector<std::pair<int, int>> conv_layers = {{10, 5}, {3, 2}, {3, 2}, {3, 2},
                                                  {3, 2}, {2, 2}, {2, 2}};
};

class Wav2Vec2Model {
 public:
  static Wav2Vec2Model load(const std::string& dir);

  int dim() const { return cfg_.dim; }
  const Wav2Vec2Config& config() const { return cfg_; }
  Index frame_count(Index samples) const;
  // 16 kHz waveform -> frames x dim hidden states of the final layer.
  Matrix forward(const Vector& wave) const;
  std::uint64_t checksum() const { return params_.checksum(); }

  // Tensor layout implied by a config: (name, rows, cols) in file order.
  // Exposed so tests and the export tool stay in lockstep with the loader.
  static std::vector<std::tuple<std::string, Index, Index>> expected_layout(
      const Wav2Vec2Config& cfg);

  Wav2Vec2Model(Wav2Vec2Config cfg, nn::ParamStore params);

 private:
  Wav2Vec2Config cfg_;
  nn::ParamStore params_;
};

}  // namespace bt
