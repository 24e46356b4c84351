#include "braintalker/synthdata.hpp"

#include "braintalker/dataio.hpp"
#include "braintalker/dsp.hpp"
#include "braintalker/eval.hpp"
#include "braintalker/types.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

using namespace bt;
using testutil::TempDir;

namespace {

synth::SynthConfig small() {
  synth::SynthConfig cfg;
  cfg.seed = 5;
  cfg.n_words = 4;
  cfg.trials_per_word = 3;
  cfg.duration_s = 0.4;
  cfg.channels = 2;
  return cfg;
}

double measured_snr_db(const Matrix& clean, const Matrix& noisy) {
  const double signal = clean.squaredNorm();
  const double noise = (noisy - clean).squaredNorm();
  return 10.0 * std::log10(signal / noise);
}

}  // namespace

TEST_CASE("speech trials are deterministic, bounded, and word-specific") {
  synth::SynthGenerator gen(small());

  SpeechWaveform a = gen.speech(0, 0);
  CHECK(a.sample_rate == 16000.0);
  CHECK(a.size() == 6400);  // 0.4 s at 16 kHz
  CHECK(a.samples.cwiseAbs().maxCoeff() <= 0.95);
  CHECK(a.samples.cwiseAbs().maxCoeff() > 0.1);  // actually carries energy

  SpeechWaveform a2 = gen.speech(0, 0);
  CHECK(a.samples == a2.samples);  // byte-identical regeneration

  SpeechWaveform b = gen.speech(1, 0);
  CHECK(a.samples != b.samples);

  SpeechWaveform a_t1 = gen.speech(0, 1);
  CHECK(a.samples != a_t1.samples);  // trials jitter
  // ...but trials of one word stay close in mel space while words differ.
  MelSpectrogram ma = dsp::mel_spectrogram(a, 13);
  MelSpectrogram mt = dsp::mel_spectrogram(a_t1, 13);
  MelSpectrogram mb = dsp::mel_spectrogram(b, 13);
  CHECK(eval::pcc(ma, mt) > 0.8);
  CHECK(eval::pcc(ma, mb) < 0.9);  // the generator's distinctness contract
}

TEST_CASE("ecog shape, rate, and SNR law") {
  synth::SynthConfig cfg = small();
  synth::SynthGenerator gen(cfg);
  SpeechWaveform speech = gen.speech(2, 1);

  EcogRecording noisy = gen.ecog(speech, 77);
  CHECK(noisy.sample_rate == 2000.0);
  CHECK(noisy.channels() == 2);
  CHECK(noisy.length() == 800);  // 0.4 s at 2 kHz

  // The infinite-SNR variant isolates the clean mixture.
  synth::SynthConfig quiet = cfg;
  quiet.snr_db = std::numeric_limits<double>::infinity();
  EcogRecording clean = synth::derive_ecog(speech, quiet, 77);
  CHECK(clean.samples.rows() == noisy.samples.rows());

  for (Index ch = 0; ch < 2; ++ch) {
    const double snr = measured_snr_db(clean.samples.row(ch), noisy.samples.row(ch));
    CHECK(snr == doctest::Approx(20.0).epsilon(0.06));  // within ~1 dB
  }

  // Different noise streams share the clean part.
  EcogRecording other = gen.ecog(speech, 78);
  CHECK(other.samples != noisy.samples);
  synth::SynthConfig quiet2 = quiet;
  EcogRecording clean2 = synth::derive_ecog(speech, quiet2, 78);
  CHECK((clean.samples - clean2.samples).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config JSON parsing fills fields and rejects unknown keys") {
  synth::SynthConfig cfg = synth::synth_config_from_json(
      R"({"seed": 9, "n_words": 5, "trials_per_word": 2, "duration_s": 0.5,
          "channels": 3, "snr_db": 14.5, "bands": 4, "mixing_taps": 7})");
  CHECK(cfg.seed == 9);
  CHECK(cfg.n_words == 5);
  CHECK(cfg.trials_per_word == 2);
  CHECK(cfg.duration_s == 0.5);
  CHECK(cfg.channels == 3);
  CHECK(cfg.snr_db == 14.5);
  CHECK(cfg.bands == 4);
  CHECK(cfg.mixing_taps == 7);

  synth::SynthConfig inf = synth::synth_config_from_json(R"({"snr_db": "inf"})");
  CHECK(std::isinf(inf.snr_db));

  CHECK_THROWS_WITH_AS(synth::synth_config_from_json(R"({"n_wordz": 5})"),
                       doctest::Contains("n_wordz"), Error);
  CHECK_THROWS_AS(synth::synth_config_from_json("not json"), Error);
  CHECK_THROWS_AS(synth::synth_config_from_json(R"({"duration_s": 0.01})"), Error);
}

TEST_CASE("generate_corpus writes a loadable, splittable corpus") {
  TempDir dir;
  synth::SynthConfig cfg = small();
  const std::string manifest = synth::generate_corpus(cfg, dir.str());
  CHECK(manifest == dir.sub("manifest.jsonl"));

  std::vector<dataio::ManifestEntry> entries = dataio::load_manifest(manifest);
  REQUIRE(entries.size() == 12);  // 4 words x 3 trials
  CHECK(entries.front().id == "word00_trial00");
  CHECK(entries.back().id == "word03_trial02");

  // Recordings round-trip through dataio and match in-memory generation.
  synth::SynthGenerator gen(cfg);
  auto [rec, speech] = dataio::read_recording(entries[4]);  // word 1, trial 1
  CHECK(rec.channels() == 2);
  CHECK(speech.size() == 6400);
  SpeechWaveform direct = gen.speech(1, 1);
  CHECK((speech.samples.cast<float>() == direct.samples.cast<float>().eval()));

  dataio::CorpusSplit split = dataio::split_corpus(entries, entries.back().word_label, 2);
  CHECK(split.train.size() == 6);
  CHECK(split.seen_test.size() == 3);
  CHECK(split.unseen_test.size() == 3);

  // Regeneration into a second directory is byte-identical.
  TempDir dir2;
  synth::generate_corpus(cfg, dir2.str());
  for (const char* name : {"speech/word00_trial00.wav", "ecog/word02_trial01.wav"}) {
    CHECK(testutil::slurp(dir.path / name) == testutil::slurp(dir2.path / name));
    CHECK(!testutil::slurp(dir.path / name).empty());
  }
  CHECK(testutil::slurp(dir.path / "manifest.jsonl") ==
        testutil::slurp(dir2.path / "manifest.jsonl"));
}

TEST_CASE("default corpus dimensions match the advertised layout") {
  synth::SynthConfig cfg;  // defaults
  CHECK(cfg.n_words * cfg.trials_per_word == 144);
  CHECK(Index(cfg.duration_s * 16000) == 12800);
  CHECK(dsp::mel_frame_count(12800) == 78);
}

TEST_CASE("the envelope oracle certifies learnability on a small corpus") {
  TempDir dir;
  synth::SynthConfig cfg = small();
  cfg.n_words = 6;
  cfg.trials_per_word = 4;
  const std::string manifest = synth::generate_corpus(cfg, dir.str());
  std::vector<dataio::ManifestEntry> entries = dataio::load_manifest(manifest);
  dataio::CorpusSplit split = dataio::split_corpus(entries, entries.back().word_label, 3);

  synth::EnvelopeOracleResult oracle = synth::envelope_oracle(split, 13);
  CHECK(oracle.train_pcc > 0.5);
  CHECK(oracle.heldout_pcc > 0.5);
  CHECK(oracle.train_pcc <= 1.0);
  CHECK(oracle.heldout_pcc <= 1.0);
}

TEST_CASE("validate rejects nonsense configurations") {
  synth::SynthConfig cfg = small();
  cfg.channels = 0;
  CHECK_THROWS_AS(synth::validate(cfg), Error);
  cfg = small();
  cfg.trials_per_word = 0;
  CHECK_THROWS_AS(synth::validate(cfg), Error);
  cfg = small();
  cfg.duration_s = 0.01;  // shorter than one mel window
  CHECK_THROWS_AS(synth::validate(cfg), Error);
  cfg = small();
  cfg.snr_db = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(synth::validate(cfg), Error);
  cfg = small();
  cfg.bands = 0;
  CHECK_THROWS_AS(synth::validate(cfg), Error);
  CHECK_NOTHROW(synth::validate(small()));
}
