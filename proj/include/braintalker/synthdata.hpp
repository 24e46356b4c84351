// braintalker/synthdata.hpp
//
// Deterministic synthetic paired corpus with a known, learnable mapping.
// Speech-like waveforms are word-specific sums of amplitude-modulated
// formant-like sinusoids with small per-trial jitter; the paired "ECoG" is a
// per-channel FIR-filtered mixture of the speech's sub-band energy envelopes
// at 2 kHz plus Gaussian noise at a target SNR. Everything derives from the
// seed, so regeneration is byte-identical. A closed-form least-squares
// regression from ECoG frames to mel frames certifies the corpus carries
// recoverable signal before any neural training.

#pragma once

#include "braintalker/dataio.hpp"
#include "braintalker/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bt::synth {

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_words = 12;
  int trials_per_word = 12;
  double duration_s = 0.8;
  int channels = 8;
  double snr_db = 20.0;  // +infinity disables the noise
  int bands = 6;         // speech sub-band envelopes feeding the mixer
  int mixing_taps = 9;   // per-channel FIR length at 2 kHz
};

SynthConfig synth_config_from_json(const std::string& text);
void validate(const SynthConfig& config);

// Generator with the per-word distinctness salts resolved once. Words are
// re-salted deterministically until every cross-word mel correlation over
// all trials stays below 0.9.
class SynthGenerator {
 public:
  explicit SynthGenerator(const SynthConfig& config);

  const SynthConfig& config() const { return cfg_; }

  SpeechWaveform speech(int word_id, int trial) const;
  // Optional noise_stream decorrelates the noise across trials; the corpus
  // writer keys it by (word, trial).
  EcogRecording ecog(const SpeechWaveform& speech, std::uint64_t noise_stream = 0) const;

 private:
  SynthConfig cfg_;
  std::vector<std::uint64_t> salts_;
};

// Free-function forms of the two generation ops.
SpeechWaveform generate_speech_like(int word_id, int trial, const SynthConfig& config);
EcogRecording derive_ecog(const SpeechWaveform& speech, const SynthConfig& config,
                          std::uint64_t noise_stream = 0);

// Writes ecog/, speech/, and manifest.jsonl under out_dir; returns the
// manifest path.
std::string generate_corpus(const SynthConfig& config, const std::string& out_dir);

// Least-squares oracle: ridge-free linear map from per-frame ECoG channel
// means (plus bias) to mel frames, fit on split.train, scored as mean
// per-utterance PCC.
struct EnvelopeOracleResult {
  double train_pcc = 0.0;
  double heldout_pcc = 0.0;
};
EnvelopeOracleResult envelope_oracle(const dataio::CorpusSplit& split, int mel_bins);

}  // namespace bt::synth
