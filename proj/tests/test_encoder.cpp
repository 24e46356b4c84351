#include "braintalker/encoder.hpp"

#include "braintalker/ad.hpp"
#include "braintalker/nn.hpp"
#include "braintalker/rng.hpp"
#include "braintalker/types.hpp"

#include "doctest.h"

using namespace bt;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.gaussian();
  return m;
}

CoarseBrainRepresentation random_z(Index channels, Index frames, Index dim, std::uint64_t seed) {
  CoarseBrainRepresentation z;
  for (Index c = 0; c < channels; ++c)
    z.channels.push_back(random_matrix(frames, dim, seed + std::uint64_t(c)));
  return z;
}

}  // namespace

TEST_CASE("encode outputs one sequence with the latent width") {
  LatentEncoder enc(3, 4);
  nn::init_params(enc.params(), 2);
  CoarseBrainRepresentation z = random_z(3, 5, 4, 10);
  z.frame_stride = 320;

  FeatureSequence c = enc.encode(z);
  CHECK(c.frames() == 5);
  CHECK(c.dim() == 4);
  CHECK(c.frame_stride == 320);
  CHECK(c.values.allFinite());
}

TEST_CASE("channel-count and shape mismatches are rejected with both numbers") {
  LatentEncoder enc(3, 4);
  nn::init_params(enc.params(), 2);

  CoarseBrainRepresentation two = random_z(2, 5, 4, 11);
  CHECK_THROWS_WITH_AS(enc.encode(two), doctest::Contains("channel-count mismatch"), Error);

  CoarseBrainRepresentation wrong_dim = random_z(3, 5, 6, 12);
  CHECK_THROWS_AS(enc.encode(wrong_dim), Error);

  CoarseBrainRepresentation ragged = random_z(3, 5, 4, 13);
  ragged.channels[1] = random_matrix(6, 4, 14);
  CHECK_THROWS_AS(enc.encode(ragged), Error);
}

TEST_CASE("with a zeroed GRU the encoder is exactly the channel merge") {
  LatentEncoder enc(3, 4);
  nn::init_params(enc.params(), 3);
  // Zero every recurrent parameter; keep the merge weights.
  for (const std::string& name : enc.params().names())
    if (name.rfind("gru.", 0) == 0) enc.params().at(name).setZero();
  enc.params().at("merge.w") << 0.3, -0.2, 0.5;
  enc.params().at("merge.b") << 0.1;

  CoarseBrainRepresentation z = random_z(3, 6, 4, 15);
  Matrix expected = 0.3 * z.channels[0] - 0.2 * z.channels[1] + 0.5 * z.channels[2];
  expected.array() += 0.1;

  FeatureSequence c = enc.encode(z);
  CHECK((c.values - expected).cwiseAbs().maxCoeff() == 0.0);  // exact identity
}

TEST_CASE("the recurrent path is causal") {
  LatentEncoder enc(2, 3);
  nn::init_params(enc.params(), 4);

  CoarseBrainRepresentation a = random_z(2, 8, 3, 16);
  CoarseBrainRepresentation b = a;
  // Perturb only frames >= 5 of one channel.
  b.channels[0].row(5).setConstant(9.0);
  b.channels[0].row(7).setConstant(-9.0);

  Matrix ca = enc.encode(a).values;
  Matrix cb = enc.encode(b).values;
  CHECK((ca.topRows(5) - cb.topRows(5)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ca.bottomRows(3) - cb.bottomRows(3)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("tape forward agrees with encode and carries gradients") {
  LatentEncoder enc(2, 3);
  nn::init_params(enc.params(), 5);
  CoarseBrainRepresentation z = random_z(2, 4, 3, 17);

  ad::Tape tape;
  nn::TapeBinding bind(tape, enc.params(), true);
  std::vector<ad::Var> vars;
  for (const Matrix& ch : z.channels) vars.push_back(tape.constant(ch));
  ad::Var c = enc.forward(bind, vars);
  CHECK((tape.value(c) - enc.encode(z).values).cwiseAbs().maxCoeff() == 0.0);

  tape.backward(tape.l2_norm(c));
  CHECK(bind.grad("merge.w").cwiseAbs().maxCoeff() > 0.0);
  CHECK(bind.grad("gru.w_cand").cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("encoder construction validates its arguments") {
  CHECK_THROWS_AS(LatentEncoder(0, 4), Error);
  CHECK_THROWS_AS(LatentEncoder(2, 0), Error);
}
