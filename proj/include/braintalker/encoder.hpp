// braintalker/encoder.hpp
//
// Latent encoder: merges the per-channel latent stack Z into one sequence
// with a linear map over the channel axis, refines it with a unidirectional
// GRU, and adds a residual connection: C = merged + GRU(merged).

#pragma once

#include "braintalker/ad.hpp"
#include "braintalker/nn.hpp"
#include "braintalker/types.hpp"

#include <vector>

namespace bt {

class LatentEncoder {
 public:
  // channels: Z's channel count; dim: latent width (GRU hidden size equals
  // dim so the residual addition is well-typed).
  LatentEncoder(int channels, int dim);

  int channels() const { return channels_; }
  int dim() const { return dim_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Tape-mode forward; z_channels holds one frames x dim Var per channel.
  ad::Var forward(const nn::TapeBinding& p, const std::vector<ad::Var>& z_channels) const;

  // Inference convenience.
  FeatureSequence encode(const CoarseBrainRepresentation& z) const;

 private:
  int channels_;
  int dim_;
  nn::ParamStore params_;
};

}  // namespace bt
