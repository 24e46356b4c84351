// braintalker/extractor.hpp
//
// Per-channel feature extraction: a 16 kHz waveform goes in, a frames x dim
// latent sequence comes out at one frame per 320 samples (50 Hz). Two
// interchangeable extractors implement the interface:
//   * "pretrained": adapter for a self-supervised speech model loaded from a
//     local weight directory (see wav2vec2.hpp); always frozen.
//   * "scratch": a randomly initialized extractor with the same strided
//     frontend geometry, usable frozen or trainable. Hermetic default.

#pragma once

#include "braintalker/ad.hpp"
#include "braintalker/nn.hpp"
#include "braintalker/types.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace bt {

struct ExtractorSpec {
  enum class Kind { kPretrained, kScratch };
  Kind kind = Kind::kScratch;
  int dim = 512;        // latent width: 768 pretrained base, 512 scratch
  bool frozen = true;   // pretrained is always frozen; scratch may train
  // Scratch architecture (ignored for pretrained).
  int blocks = 12;
  int ffn_dim = 128;
  int heads = 8;
  std::uint64_t init_seed = 1;  // scratch weight initialization
  // Pretrained weight directory; empty means $BRAINTALKER_CACHE.
  std::string cache_dir;
};

// Strided-frontend geometry shared by both extractor kinds: kernel sizes
// (10,3,3,3,3,2,2) with strides (5,2,2,2,2,2,2), cumulative stride 320 and
// receptive field 400 samples.
extern const std::vector<std::pair<int, int>> kFrontendKernelStride;
constexpr Index kFrontendStride = 320;
constexpr Index kFrontendReceptiveField = 400;

// Output frame count of the strided frontend for an input of n samples.
Index frontend_frame_count(Index n);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  virtual bool frozen() const = 0;
  // Frames x dim latents for a 16 kHz waveform; inference mode.
  virtual FeatureSequence extract(const Vector& wave) const = 0;
  // Hash of all weights; used to prove frozen extractors stay frozen.
  virtual std::uint64_t checksum() const = 0;
};

class ScratchExtractor : public FeatureExtractor {
 public:
  explicit ScratchExtractor(const ExtractorSpec& spec);

  int dim() const override { return spec_.dim; }
  bool frozen() const override { return spec_.frozen; }
  FeatureSequence extract(const Vector& wave) const override;
  std::uint64_t checksum() const override { return params_.checksum(); }

  const ExtractorSpec& spec() const { return spec_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Tape-mode forward for trainable runs; wave enters as an N x 1 leaf.
  ad::Var forward(const nn::TapeBinding& p, ad::Var wave_col) const;

 private:
  ExtractorSpec spec_;
  nn::ParamStore params_;
};

// Builds the extractor named by the spec. Pretrained kind loads weights from
// spec.cache_dir, or $BRAINTALKER_CACHE when empty, and errors with the
// missing path otherwise.
std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec);

// High-level operations -------------------------------------------------------

FeatureSequence extract_features(const Vector& wave16k, const FeatureExtractor& ex);

// Resamples every channel to 16 kHz and applies per-channel z-scoring; this
// is the expected conditioning before extract_ecog.
EcogRecording prepare_ecog(const EcogRecording& rec);

// Per-channel extraction, channel order preserved. rec must be at 16 kHz
// (run prepare_ecog first).
CoarseBrainRepresentation extract_ecog(const EcogRecording& rec, const FeatureExtractor& ex);

// Speech latent S aligned to a paired representation with paired_frames
// frames. A one-frame surplus is trimmed from the end; a one-frame deficit
// is returned as-is (trim the other side); anything larger is an error.
FeatureSequence extract_speech_latent(const SpeechWaveform& wave, const FeatureExtractor& ex,
                                      Index paired_frames);

// Trims both sides to their common frame count when they differ by at most
// one frame; errors otherwise.
void align_frames(CoarseBrainRepresentation& z, FeatureSequence& s);

}  // namespace bt
