#include "braintalker/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <vector>

namespace bt::dsp {

namespace {

constexpr int kHalfWidth = 16;  // sinc half-width, in low-rate samples

double sinc(double t) {
  if (std::abs(t) < 1e-12) return 1.0;
  return std::sin(M_PI * t) / (M_PI * t);
}

// Blackman window on [-1, 1].
double blackman(double t) {
  if (std::abs(t) > 1.0) return 0.0;
  return 0.42 + 0.5 * std::cos(M_PI * t) + 0.08 * std::cos(2.0 * M_PI * t);
}

bool integer_ratio(double a, double b, long& factor) {
  const double r = a / b;
  const double rounded = std::round(r);
  if (rounded < 1.0 || std::abs(r - rounded) > 1e-9 * rounded) return false;
  factor = long(rounded);
  return true;
}

Vector upsample_by(const Vector& x, long L) {
  const Index n = x.size();
  Vector y = Vector::Zero(n * L);
  // Kernel at the output rate: cutoff pi/L, gain L, support |n| <= L*half.
  for (Index q = 0; q < n; ++q) {
    for (long p = 0; p < L; ++p) {
      double acc = 0.0;
      for (long k = -kHalfWidth; k <= kHalfWidth; ++k) {
        const Index i = q - k;
        if (i < 0 || i >= n) continue;
        const double t = (double(k) + double(p) / double(L));
        acc += x[i] * sinc(t) * blackman(t / kHalfWidth);
      }
      y[q * L + p] = acc;
    }
  }
  return y;
}

Vector downsample_by(const Vector& x, long M) {
  const Index n = x.size();
  const Index out_n = Index(std::llround(double(n) / double(M)));
  Vector y = Vector::Zero(out_n);
  // Kernel at the input rate: cutoff pi/M, gain 1, support |n| <= M*half.
  const long support = M * kHalfWidth;
  for (Index j = 0; j < out_n; ++j) {
    const Index center = j * M;
    double acc = 0.0;
    for (long k = -support; k <= support; ++k) {
      const Index i = center - k;
      if (i < 0 || i >= n) continue;
      const double t = double(k) / double(M);
      acc += x[i] * sinc(t) * blackman(t / kHalfWidth) / double(M);
    }
    y[j] = acc;
  }
  return y;
}

}  // namespace

Vector resample(const Vector& signal, double from_rate, double to_rate) {
  require(from_rate > 0.0 && to_rate > 0.0, "resample: rates must be positive");
  if (from_rate == to_rate) return signal;
  long factor = 0;
  if (integer_ratio(to_rate, from_rate, factor)) return upsample_by(signal, factor);
  if (integer_ratio(from_rate, to_rate, factor)) return downsample_by(signal, factor);
  fail("resample: rate ratio " + std::to_string(from_rate) + " -> " + std::to_string(to_rate) +
       " is not an integer factor in either direction");
}

Vector normalize_channel(const Vector& signal) {
  require(signal.size() >= 2, "normalize_channel: need at least 2 samples");
  const double mean = signal.mean();
  const double var = (signal.array() - mean).square().mean();
  // A numerically flat channel carries no information; dividing by its
  // rounding-noise std would emit +/-1 garbage, so clamp it to zero instead.
  const double scale = signal.cwiseAbs().maxCoeff();
  if (var <= 1e-20 * scale * scale) return Vector::Zero(signal.size());
  return (signal.array() - mean) / std::sqrt(var);
}

Matrix mel_filterbank(int bins, int nfft, double sample_rate, double fmin, double fmax) {
  require(bins >= 1, "mel_filterbank: bins must be >= 1");
  require(fmax > fmin && fmax <= sample_rate / 2.0 + 1e-9, "mel_filterbank: bad band edges");
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };

  const int n_bins = nfft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(bins + 2);
  for (int i = 0; i < bins + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(bins + 1));

  Matrix fb = Matrix::Zero(bins, n_bins);
  for (int b = 0; b < bins; ++b) {
    const double left = edges[b], center = edges[b + 1], right = edges[b + 2];
    for (int i = 0; i < n_bins; ++i) {
      const double f = double(i) * sample_rate / double(nfft);
      double w = 0.0;
      if (f > left && f < right)
        w = std::min((f - left) / (center - left), (right - f) / (right - center));
      fb(b, i) = std::max(0.0, w);
    }
    const double peak = fb.row(b).maxCoeff();
    if (peak > 0.0) fb.row(b) /= peak;
  }
  return fb;
}

Matrix stft_magnitude(const Vector& signal, int win, int hop, int nfft) {
  require(signal.size() >= win, "stft_magnitude: input shorter than one window");
  require(nfft >= win, "stft_magnitude: nfft must be >= window length");
  const Index frames = 1 + (signal.size() - win) / hop;

  Vector window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(i) / double(win)));

  Eigen::FFT<double> fft;
  const int n_bins = nfft / 2 + 1;
  Matrix mag(frames, n_bins);
  std::vector<double> buf(nfft, 0.0);
  std::vector<std::complex<double>> spec;
  for (Index t = 0; t < frames; ++t) {
    for (int i = 0; i < win; ++i) buf[i] = signal[t * hop + i] * window[i];
    std::fill(buf.begin() + win, buf.end(), 0.0);
    fft.fwd(spec, buf);
    for (int i = 0; i < n_bins; ++i) mag(t, i) = std::abs(spec[i]);
  }
  return mag;
}

MelSpectrogram mel_spectrogram(const SpeechWaveform& wave, int bins) {
  require(wave.sample_rate == kMelSampleRate,
          "mel_spectrogram: expected 16000 Hz input, got " + std::to_string(wave.sample_rate));
  require(bins == 13 || bins == 80, "mel_spectrogram: bins must be 13 or 80");
  require(wave.samples.size() >= kMelWinSamples, "mel_spectrogram: input shorter than one window");
  require(wave.samples.allFinite(), "mel_spectrogram: input contains non-finite samples");

  const int nfft = 512;  // smallest power of two >= the 400-sample window
  const Matrix mag = stft_magnitude(wave.samples, kMelWinSamples, kMelHopSamples, nfft);
  const Matrix fb = mel_filterbank(bins, nfft, kMelSampleRate, 0.0, 8000.0);
  const Matrix mel = (mag * fb.transpose()).cwiseMax(kMelLogFloor).array().log();

  MelSpectrogram out;
  out.values = mel.cast<float>();
  return out;
}

}  // namespace bt::dsp
