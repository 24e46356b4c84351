// braintalker/dataio.hpp
//
// Corpus manifests (JSON lines), train/seen-test/unseen-test splitting,
// recording containers, and the .melbin exchange format at the vocoder
// boundary.
//
// File formats:
//   manifest      one JSON object per line: {id, word_label, trial_index,
//                 ecog_path, speech_path}; relative paths resolve against
//                 the manifest's directory on load.
//   ECoG          multichannel float32 WAV, or raw little-endian float32
//                 (channel-major) with a JSON sidecar {channels, sample_rate}.
//   speech        mono float32 WAV at 16 kHz (PCM16 accepted on read).
//   <stem>.melbin little-endian float32, row-major frames x bins, plus
//                 sidecar <stem>.melbin.json with
//                 {frames, bins, hop_ms, win_ms, log_base}.

#pragma once

#include "braintalker/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace bt::dataio {

struct ManifestEntry {
  std::string id;
  std::string word_label;
  int trial_index = 0;
  std::string ecog_path;
  std::string speech_path;

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusSplit {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> seen_test;
  std::vector<ManifestEntry> unseen_test;
};

// Loads and validates a manifest: unique ids, unique (word, trial) pairs,
// readable referenced files. Errors name the offending entry.
std::vector<ManifestEntry> load_manifest(const std::string& path);

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

// All trials of unseen_word go to unseen_test; trial heldout_trial of every
// remaining word goes to seen_test; the rest is train. Deterministic.
CorpusSplit split_corpus(const std::vector<ManifestEntry>& entries,
                         const std::string& unseen_word, int heldout_trial);

// --- recording containers ------------------------------------------------

struct WavData {
  Matrix samples;  // channels x time
  double sample_rate = 0.0;
};

WavData read_wav(const std::string& path);
// Writes 32-bit IEEE float WAV, channels interleaved per frame.
void write_wav(const std::string& path, const Matrix& samples, double sample_rate);

// Raw fallback: <path> holds float32 channel-major samples, <path>.json
// holds {"channels": c, "sample_rate": r}.
WavData read_raw_f32(const std::string& path);
void write_raw_f32(const std::string& path, const Matrix& samples, double sample_rate);

// Container dispatch on extension: ".wav" -> WAV, anything else -> raw+sidecar.
EcogRecording read_ecog(const std::string& path);
SpeechWaveform read_speech(const std::string& path);

std::pair<EcogRecording, SpeechWaveform> read_recording(const ManifestEntry& entry);

// --- mel exchange format ---------------------------------------------------

void write_mel(const MelSpectrogram& mel, const std::string& path);
MelSpectrogram read_mel(const std::string& path);

}  // namespace bt::dataio
