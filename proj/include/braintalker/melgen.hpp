// braintalker/melgen.hpp
//
// Mel generator: doubles the temporal resolution of the encoded sequence C
// with two transposed convolutions (LeakyReLU before each), adds sinusoidal
// positions, refines with pre-norm attention+FFN blocks, and projects to mel
// bins. The caller passes the exact mel frame count of the target; at most
// two trailing frames are trimmed to match it.

#pragma once

#include "braintalker/ad.hpp"
#include "braintalker/nn.hpp"
#include "braintalker/types.hpp"

namespace bt {

struct MelGenConfig {
  int input_dim = 768;  // width of C (extractor dim)
  int model_dim = 256;  // d
  int heads = 4;        // h
  int ffn_dim = 1024;   // f
  int blocks = 8;
  int bins = 13;        // mel bins, 13 or 80
};

class MelGenerator {
 public:
  explicit MelGenerator(const MelGenConfig& cfg);

  const MelGenConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Upsampling block only: frames F -> exactly 2F, width model_dim.
  ad::Var upsample(const nn::TapeBinding& p, ad::Var c) const;
  // Full forward without trimming: F x input_dim -> 2F x bins.
  ad::Var forward(const nn::TapeBinding& p, ad::Var c) const;
  // Trimmed forward; requires 2F >= target_frames >= 2F - 2.
  ad::Var generate(const nn::TapeBinding& p, ad::Var c, Index target_frames) const;

  // Inference convenience.
  MelSpectrogram generate_mel(const FeatureSequence& c, Index target_frames) const;

 private:
  MelGenConfig cfg_;
  nn::ParamStore params_;
};

}  // namespace bt
