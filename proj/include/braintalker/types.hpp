// braintalker/types.hpp
//
// Core domain types shared across the pipeline. All numeric work is done in
// double precision Eigen matrices; float32 appears only at file boundaries
// (WAV containers and the .melbin exchange format).

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bt {

using Matrix = Eigen::MatrixXd;
using MatrixF = Eigen::MatrixXf;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Mono speech signal. The feature extractor expects 16 kHz input.
struct SpeechWaveform {
  Vector samples;
  double sample_rate = 16000.0;

  Index size() const { return samples.size(); }
  double duration_s() const { return double(samples.size()) / sample_rate; }
};

// Multichannel neural recording, one row per channel.
struct EcogRecording {
  Matrix samples;  // channels x time
  double sample_rate = 2000.0;

  Index channels() const { return samples.rows(); }
  Index length() const { return samples.cols(); }
  double duration_s() const { return double(samples.cols()) / sample_rate; }
};

// Frames x dim latent matrix produced by a feature extractor or the latent
// encoder. frame_stride is the extractor hop in 16 kHz samples.
struct FeatureSequence {
  Matrix values;  // frames x dim
  int frame_stride = 320;

  Index frames() const { return values.rows(); }
  Index dim() const { return values.cols(); }
};

// Per-channel feature stack: channels x frames x dim, stored as one
// frames x dim matrix per channel. All slices share frames and dim.
struct CoarseBrainRepresentation {
  std::vector<Matrix> channels;  // each frames x dim
  int frame_stride = 320;

  Index channel_count() const { return Index(channels.size()); }
  Index frames() const { return channels.empty() ? 0 : channels.front().rows(); }
  Index dim() const { return channels.empty() ? 0 : channels.front().cols(); }
};

// Log-amplitude mel-spectrogram, frames x bins. Stored in float32, the type
// of the on-disk exchange format; window/hop are fixed by that format.
struct MelSpectrogram {
  MatrixF values;  // frames x bins

  Index frames() const { return values.rows(); }
  Index bins() const { return values.cols(); }
};

constexpr int kMelWinMs = 25;
constexpr int kMelHopMs = 10;
constexpr double kMelSampleRate = 16000.0;
constexpr int kMelWinSamples = 400;   // 25 ms at 16 kHz
constexpr int kMelHopSamples = 160;   // 10 ms at 16 kHz
constexpr double kMelLogFloor = 1e-5; // amplitude floor before the natural log

}  // namespace bt
