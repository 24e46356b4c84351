#include "braintalker/melgen.hpp"

namespace bt {

namespace {
constexpr double kLeakySlope = 0.1;
constexpr double kLnEps = 1e-5;
}  // namespace

MelGenerator::MelGenerator(const MelGenConfig& cfg) : cfg_(cfg) {
  require(cfg.input_dim >= 1 && cfg.model_dim >= 1 && cfg.ffn_dim >= 1 && cfg.blocks >= 0,
          "MelGenConfig: sizes must be positive");
  require(cfg.heads >= 1 && cfg.model_dim % cfg.heads == 0,
          "MelGenConfig: model_dim must be divisible by heads");
  require(cfg.bins == 13 || cfg.bins == 80, "MelGenConfig: bins must be 13 or 80");
  nn::add_linear(params_, "up1", cfg.model_dim, Index(4) * cfg.input_dim);
  nn::add_linear(params_, "up2", cfg.model_dim, Index(3) * cfg.model_dim);
  for (int b = 0; b < cfg.blocks; ++b)
    nn::add_fft_block(params_, "block" + std::to_string(b), cfg.model_dim, cfg.ffn_dim);
  nn::add_linear(params_, "out", cfg.bins, cfg.model_dim);
}

ad::Var MelGenerator::upsample(const nn::TapeBinding& p, ad::Var c) const {
  ad::Tape& t = p.tape();
  require(t.value(c).cols() == cfg_.input_dim,
          "mel generator expects width " + std::to_string(cfg_.input_dim) + ", got " +
              std::to_string(t.value(c).cols()));
  // kernel 4, stride 2, pad 1: frames F -> 2F
  ad::Var h = t.leaky_relu(c, kLeakySlope);
  h = t.conv1d_transpose(h, p["up1.w"], p["up1.b"], 4, 2, 1);
  // kernel 3, stride 1, pad 1: length-preserving
  h = t.leaky_relu(h, kLeakySlope);
  h = t.conv1d_transpose(h, p["up2.w"], p["up2.b"], 3, 1, 1);
  return h;
}

ad::Var MelGenerator::forward(const nn::TapeBinding& p, ad::Var c) const {
  ad::Tape& t = p.tape();
  ad::Var h = upsample(p, c);
  h = t.add_const(h, nn::sinusoidal_positions(t.value(h).rows(), cfg_.model_dim));
  for (int b = 0; b < cfg_.blocks; ++b)
    h = nn::fft_block(p, "block" + std::to_string(b), h, cfg_.heads, nn::Activation::kReLU,
                      kLnEps);
  return nn::linear(p, "out", h);
}

ad::Var MelGenerator::generate(const nn::TapeBinding& p, ad::Var c, Index target_frames) const {
  ad::Tape& t = p.tape();
  const Index doubled = 2 * t.value(c).rows();
  require(target_frames <= doubled && target_frames >= doubled - 2,
          "target_frames " + std::to_string(target_frames) + " outside [" +
              std::to_string(doubled - 2) + ", " + std::to_string(doubled) +
              "] for an input of " + std::to_string(t.value(c).rows()) + " frames");
  ad::Var h = forward(p, c);
  return target_frames == doubled ? h : t.rows_head(h, target_frames);
}

MelSpectrogram MelGenerator::generate_mel(const FeatureSequence& c, Index target_frames) const {
  ad::Tape tape;
  nn::TapeBinding binding(tape, params_, /*trainable=*/false);
  ad::Var out = generate(binding, tape.constant(c.values), target_frames);
  MelSpectrogram mel;
  mel.values = tape.value(out).cast<float>();
  return mel;
}

}  // namespace bt
