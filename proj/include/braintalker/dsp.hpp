// braintalker/dsp.hpp
//
// Signal conditioning ahead of the feature extractor and the log-mel target
// transform. All operations are pure and stateless.

#pragma once

#include "braintalker/types.hpp"

namespace bt::dsp {

// Integer-factor polyphase resampling with a Blackman-windowed-sinc kernel.
// Output length is exactly round(N * to_rate / from_rate). The rate ratio
// must be an integer in one direction or the other.
Vector resample(const Vector& signal, double from_rate, double to_rate);

// Zero-mean, unit-variance (population) scaling. Constant input maps to
// all-zeros rather than dividing by zero.
Vector normalize_channel(const Vector& signal);

// Triangular mel filterbank on the HTK mel scale, one row per filter,
// nfft/2+1 columns, each row scaled to unit peak.
Matrix mel_filterbank(int bins, int nfft, double sample_rate, double fmin, double fmax);

// Magnitude spectrogram: frames x (nfft/2+1), Hann window, no centering.
// Frame t covers samples [t*hop, t*hop + win).
Matrix stft_magnitude(const Vector& signal, int win, int hop, int nfft);

// Number of mel frames for n_samples at the fixed 25 ms / 10 ms framing.
inline Index mel_frame_count(Index n_samples) {
  return 1 + (n_samples - kMelWinSamples) / kMelHopSamples;
}

// Log-mel spectrogram of a 16 kHz waveform: Hann window -> 512-point
// magnitude spectrum -> mel filterbank (0-8 kHz) -> natural log with an
// amplitude floor. bins must be 13 or 80.
MelSpectrogram mel_spectrogram(const SpeechWaveform& wave, int bins);

}  // namespace bt::dsp
