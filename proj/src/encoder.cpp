#include "braintalker/encoder.hpp"

namespace bt {

LatentEncoder::LatentEncoder(int channels, int dim) : channels_(channels), dim_(dim) {
  require(channels >= 1 && dim >= 1, "LatentEncoder: channels and dim must be positive");
  params_.create("merge.w", 1, channels);
  params_.create("merge.b", 1, 1);
  nn::add_gru(params_, "gru", dim, dim);
}

ad::Var LatentEncoder::forward(const nn::TapeBinding& p,
                               const std::vector<ad::Var>& z_channels) const {
  ad::Tape& t = p.tape();
  require(Index(z_channels.size()) == channels_,
          "channel-count mismatch: representation has " + std::to_string(z_channels.size()) +
              " channels, encoder merges " + std::to_string(channels_));
  const Index frames = t.value(z_channels.front()).rows();
  ad::Var w = p["merge.w"];
  ad::Var merged;
  for (int c = 0; c < channels_; ++c) {
    const Matrix& zc = t.value(z_channels[std::size_t(c)]);
    require(zc.rows() == frames && zc.cols() == dim_,
            "channel " + std::to_string(c) + " has shape " + std::to_string(zc.rows()) + "x" +
                std::to_string(zc.cols()) + ", expected " + std::to_string(frames) + "x" +
                std::to_string(dim_));
    ad::Var term = t.scale_by(z_channels[std::size_t(c)], t.slice_cols(w, c, 1));
    merged = c == 0 ? term : t.add(merged, term);
  }
  merged = t.add_scalar(merged, p["merge.b"]);
  ad::Var recurrent = t.gru(merged, nn::gru_params(p, "gru"));
  return t.add(merged, recurrent);
}

FeatureSequence LatentEncoder::encode(const CoarseBrainRepresentation& z) const {
  ad::Tape tape;
  nn::TapeBinding binding(tape, params_, /*trainable=*/false);
  std::vector<ad::Var> vars;
  vars.reserve(z.channels.size());
  for (const Matrix& ch : z.channels) vars.push_back(tape.constant(ch));
  ad::Var c = forward(binding, vars);
  FeatureSequence out;
  out.values = tape.value(c);
  out.frame_stride = z.frame_stride;
  return out;
}

}  // namespace bt
