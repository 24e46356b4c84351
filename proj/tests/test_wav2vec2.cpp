#include "braintalker/wav2vec2.hpp"

#include "braintalker/extractor.hpp"
#include "braintalker/types.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <vector>

using namespace bt;
using testutil::TempDir;

namespace {

bool python_reference_available() {
  return std::system("python3 -c 'import torch, transformers, numpy' >/dev/null 2>&1") == 0;
}

std::vector<float> read_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  in.seekg(0, std::ios::end);
  const std::streamoff bytes = in.tellg();
  REQUIRE(bytes % 4 == 0);
  in.seekg(0);
  std::vector<float> out(std::size_t(bytes) / 4);
  in.read(reinterpret_cast<char*>(out.data()), bytes);
  REQUIRE(in.good());
  return out;
}

}  // namespace

TEST_CASE("expected_layout covers the whole architecture exactly once") {
  Wav2Vec2Config cfg;
  cfg.conv_dim = 8;
  cfg.dim = 12;
  cfg.blocks = 2;
  cfg.heads = 2;
  cfg.ffn_dim = 20;
  cfg.pos_kernel = 6;
  cfg.pos_groups = 3;
  cfg.conv_layers = {{10, 5}, {3, 2}};

  auto layout = Wav2Vec2Model::expected_layout(cfg);
  REQUIRE(!layout.empty());
  // conv0 w + its group norm, conv1 w, projection ln+fc, pos conv, encoder
  // ln, then 10 tensors per block.
  std::size_t expected = 1 + 2 + 1 + (2 + 2) + 2 + 2 + std::size_t(cfg.blocks) * (8 + 2 + 4 + 2);
  CHECK(layout.size() == expected);
  CHECK(std::get<0>(layout.front()) == "frontend.conv0.w");
  // No duplicate names.
  std::set<std::string> names;
  for (const auto& [name, rows, cols] : layout) {
    CHECK(rows >= 1);
    CHECK(cols >= 1);
    CHECK(names.insert(name).second);
  }
}

TEST_CASE("loader rejects missing or inconsistent weight directories") {
  TempDir dir;
  CHECK_THROWS_AS(Wav2Vec2Model::load(dir.sub("nowhere")), Error);

  // Index present but blob truncated.
  testutil::spit(dir.sub("wav2vec2.json"),
                 R"({"conv_dim": 4, "dim": 4, "blocks": 1, "heads": 1, "ffn_dim": 8,
                     "pos_kernel": 4, "pos_groups": 2, "conv_layers": [[10, 5]]})");
  testutil::spit(dir.sub("wav2vec2.bin"), "short");
  CHECK_THROWS_AS(Wav2Vec2Model::load(dir.str()), Error);
}

TEST_CASE("adapter forward matches the reference implementation") {
  if (!python_reference_available()) {
    MESSAGE("python3 with torch/transformers not available; reference parity not exercised");
    return;
  }

  TempDir dir("bt_w2v2_selftest");
  const std::string cmd = "python3 \"" + testutil::source_dir() +
                          "/tools/export_wav2vec2.py\" --selftest --out \"" + dir.str() +
                          "\" >/dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);

  nlohmann::json meta = nlohmann::json::parse(testutil::slurp(dir.sub("meta.json")));
  const Index samples = meta.at("samples").get<Index>();
  const Index frames = meta.at("frames").get<Index>();
  const Index dim = meta.at("dim").get<Index>();

  std::vector<float> input = read_f32(dir.sub("input.f32"));
  std::vector<float> expected = read_f32(dir.sub("expected.f32"));
  REQUIRE(Index(input.size()) == samples);
  REQUIRE(Index(expected.size()) == frames * dim);

  Wav2Vec2Model model = Wav2Vec2Model::load(dir.str());
  CHECK(model.dim() == dim);
  CHECK(model.frame_count(samples) == frames);

  Vector wave(samples);
  for (Index i = 0; i < samples; ++i) wave[i] = double(input[std::size_t(i)]);
  Matrix out = model.forward(wave);
  REQUIRE(out.rows() == frames);
  REQUIRE(out.cols() == dim);

  double max_abs = 0.0, ref_scale = 0.0;
  for (Index t = 0; t < frames; ++t)
    for (Index d = 0; d < dim; ++d) {
      const double ref = double(expected[std::size_t(t * dim + d)]);
      max_abs = std::max(max_abs, std::abs(out(t, d) - ref));
      ref_scale = std::max(ref_scale, std::abs(ref));
    }
  INFO("max abs deviation ", max_abs, " against reference scale ", ref_scale);
  CHECK(max_abs < 5e-4 * std::max(1.0, ref_scale));

  // The exported directory also plugs in through the extractor interface.
  ExtractorSpec spec;
  spec.kind = ExtractorSpec::Kind::kPretrained;
  spec.dim = int(dim);
  spec.cache_dir = dir.str();
  auto ex = make_extractor(spec);
  CHECK(ex->frozen());
  FeatureSequence seq = ex->extract(wave);
  CHECK(seq.frames() == frames);
  CHECK((seq.values - out).cwiseAbs().maxCoeff() == 0.0);

  ExtractorSpec wrong = spec;
  wrong.dim = int(dim) + 1;
  CHECK_THROWS_AS(make_extractor(wrong), Error);
}
