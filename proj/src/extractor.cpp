#include "braintalker/extractor.hpp"

#include "braintalker/dsp.hpp"
#include "braintalker/wav2vec2.hpp"

#include <cmath>
#include <cstdlib>

namespace bt {

const std::vector<std::pair<int, int>> kFrontendKernelStride = {
    {10, 5}, {3, 2}, {3, 2}, {3, 2}, {3, 2}, {2, 2}, {2, 2}};

Index frontend_frame_count(Index n) {
  Index len = n;
  for (const auto& [kernel, stride] : kFrontendKernelStride) {
    if (len < kernel) return 0;
    len = (len - kernel) / stride + 1;
  }
  return len;
}

ScratchExtractor::ScratchExtractor(const ExtractorSpec& spec) : spec_(spec) {
  require(spec.kind == ExtractorSpec::Kind::kScratch, "ScratchExtractor: spec.kind mismatch");
  require(spec.dim > 0 && spec.blocks >= 0 && spec.ffn_dim > 0 && spec.heads > 0,
          "ScratchExtractor: bad architecture sizes");
  require(spec.dim % spec.heads == 0, "ScratchExtractor: dim must be divisible by heads");

  Index c_in = 1;
  for (std::size_t i = 0; i < kFrontendKernelStride.size(); ++i) {
    const auto [kernel, stride] = kFrontendKernelStride[i];
    (void)stride;
    nn::add_linear(params_, "frontend.conv" + std::to_string(i), spec.dim,
                   Index(kernel) * c_in);
    c_in = spec.dim;
  }
  nn::add_layer_norm(params_, "frontend.ln", spec.dim);
  nn::add_linear(params_, "proj", spec.dim, spec.dim);
  for (int b = 0; b < spec.blocks; ++b)
    nn::add_fft_block(params_, "block" + std::to_string(b), spec.dim, spec.ffn_dim);

  nn::init_params(params_, spec.init_seed);
}

ad::Var ScratchExtractor::forward(const nn::TapeBinding& p, ad::Var wave_col) const {
  ad::Tape& t = p.tape();
  require(t.value(wave_col).cols() == 1, "ScratchExtractor::forward: wave must be N x 1");
  const Index n = t.value(wave_col).rows();
  require(frontend_frame_count(n) >= 1,
          "wave too short for one output frame: " + std::to_string(n) + " samples, need >= " +
              std::to_string(kFrontendReceptiveField));

  ad::Var h = wave_col;
  for (std::size_t i = 0; i < kFrontendKernelStride.size(); ++i) {
    const auto [kernel, stride] = kFrontendKernelStride[i];
    const std::string prefix = "frontend.conv" + std::to_string(i);
    h = t.conv1d(h, p[prefix + ".w"], p[prefix + ".b"], kernel, stride);
    h = t.gelu(h);
  }
  h = nn::layer_norm(p, "frontend.ln", h, 1e-5);
  h = nn::linear(p, "proj", h);
  h = t.add_const(h, nn::sinusoidal_positions(t.value(h).rows(), spec_.dim));
  for (int b = 0; b < spec_.blocks; ++b)
    h = nn::fft_block(p, "block" + std::to_string(b), h, spec_.heads, nn::Activation::kGELU,
                      1e-5);
  return h;
}

FeatureSequence ScratchExtractor::extract(const Vector& wave) const {
  ad::Tape tape;
  nn::TapeBinding binding(tape, params_, /*trainable=*/false);
  ad::Var out = forward(binding, tape.constant(wave));
  FeatureSequence seq;
  seq.values = tape.value(out);
  seq.frame_stride = int(kFrontendStride);
  return seq;
}

namespace {

class PretrainedExtractor : public FeatureExtractor {
 public:
  explicit PretrainedExtractor(Wav2Vec2Model model) : model_(std::move(model)) {}
  int dim() const override { return model_.dim(); }
  bool frozen() const override { return true; }
  FeatureSequence extract(const Vector& wave) const override {
    FeatureSequence seq;
    seq.values = model_.forward(wave);
    seq.frame_stride = int(kFrontendStride);
    return seq;
  }
  std::uint64_t checksum() const override { return model_.checksum(); }

 private:
  Wav2Vec2Model model_;
};

}  // namespace

std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec) {
  if (spec.kind == ExtractorSpec::Kind::kScratch) return std::make_unique<ScratchExtractor>(spec);
  require(spec.frozen, "pretrained extractor must be frozen");
  std::string dir = spec.cache_dir;
  if (dir.empty()) {
    const char* env = std::getenv("BRAINTALKER_CACHE");
    if (env) dir = env;
  }
  require(!dir.empty(),
          "pretrained extractor needs a weight directory: set spec.cache_dir or BRAINTALKER_CACHE");
  Wav2Vec2Model model = Wav2Vec2Model::load(dir);
  require(model.dim() == spec.dim, "pretrained extractor dim mismatch: weights have " +
                                       std::to_string(model.dim()) + ", spec asks for " +
                                       std::to_string(spec.dim));
  return std::make_unique<PretrainedExtractor>(std::move(model));
}

FeatureSequence extract_features(const Vector& wave16k, const FeatureExtractor& ex) {
  require(wave16k.size() >= kFrontendReceptiveField,
          "wave too short for one output frame: " + std::to_string(wave16k.size()) +
              " samples, need >= " + std::to_string(kFrontendReceptiveField));
  require(wave16k.allFinite(), "wave contains non-finite values");
  return ex.extract(wave16k);
}

EcogRecording prepare_ecog(const EcogRecording& rec) {
  require(rec.samples.rows() >= 1, "recording has no channels");
  EcogRecording out;
  out.sample_rate = 16000.0;
  const Index channels = rec.samples.rows();
  for (Index c = 0; c < channels; ++c) {
    Vector up = dsp::resample(rec.samples.row(c).transpose(), rec.sample_rate, 16000.0);
    up = dsp::normalize_channel(up);
    if (c == 0) out.samples.resize(channels, up.size());
    require(up.size() == out.samples.cols(), "channels disagree on length after resampling");
    out.samples.row(c) = up.transpose();
  }
  return out;
}

CoarseBrainRepresentation extract_ecog(const EcogRecording& rec, const FeatureExtractor& ex) {
  require(std::abs(rec.sample_rate - 16000.0) < 1e-6,
          "extract_ecog expects a 16 kHz recording (run prepare_ecog first), got " +
              std::to_string(rec.sample_rate) + " Hz");
  require(rec.samples.rows() >= 1, "recording has no channels");
  CoarseBrainRepresentation z;
  z.frame_stride = int(kFrontendStride);
  z.channels.reserve(std::size_t(rec.samples.rows()));
  for (Index c = 0; c < rec.samples.rows(); ++c) {
    FeatureSequence seq = extract_features(rec.samples.row(c).transpose(), ex);
    if (!z.channels.empty())
      require(seq.values.rows() == z.channels.front().rows(),
              "channels disagree on frame count");
    z.channels.push_back(std::move(seq.values));
  }
  return z;
}

FeatureSequence extract_speech_latent(const SpeechWaveform& wave, const FeatureExtractor& ex,
                                      Index paired_frames) {
  require(std::abs(wave.sample_rate - 16000.0) < 1e-6, "speech must be at 16 kHz");
  FeatureSequence s = extract_features(wave.samples, ex);
  const Index diff = s.values.rows() - paired_frames;
  if (diff > 1 || diff < -1)
    fail("speech/ECoG frame-count mismatch: speech latents have " +
         std::to_string(s.values.rows()) + " frames, paired representation has " +
         std::to_string(paired_frames));
  if (diff == 1) s.values.conservativeResize(paired_frames, Eigen::NoChange);
  return s;
}

void align_frames(CoarseBrainRepresentation& z, FeatureSequence& s) {
  require(!z.channels.empty(), "empty representation");
  const Index zf = z.channels.front().rows();
  const Index sf = s.values.rows();
  const Index diff = zf - sf;
  if (diff > 1 || diff < -1)
    fail("frame-count mismatch beyond one frame: " + std::to_string(zf) + " vs " +
         std::to_string(sf));
  const Index common = std::min(zf, sf);
  for (Matrix& ch : z.channels)
    if (ch.rows() != common) ch.conservativeResize(common, Eigen::NoChange);
  if (s.values.rows() != common) s.values.conservativeResize(common, Eigen::NoChange);
}

}  // namespace bt
