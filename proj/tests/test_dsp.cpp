#include "braintalker/dsp.hpp"

#include "braintalker/eval.hpp"
#include "braintalker/types.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>

using namespace bt;

namespace {

Vector sine(double freq_hz, double rate, Index n, double phase = 0.0) {
  Vector x(n);
  for (Index i = 0; i < n; ++i)
    x[i] = std::sin(2.0 * std::numbers::pi * freq_hz * double(i) / rate + phase);
  return x;
}

}  // namespace

TEST_CASE("normalize_channel maps {1,3} to {-1,1} and constants to zero") {
  Vector v(2);
  v << 1.0, 3.0;
  Vector out = dsp::normalize_channel(v);
  CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));

  Vector flat = Vector::Constant(100, 4.2);
  CHECK(dsp::normalize_channel(flat).cwiseAbs().maxCoeff() == 0.0);

  Vector one(1);
  one << 1.0;
  CHECK_THROWS_AS(dsp::normalize_channel(one), Error);
}

TEST_CASE("resample output length is exactly round(N * to / from)") {
  CHECK(dsp::resample(Vector::Zero(2000), 2000.0, 16000.0).size() == 16000);
  CHECK(dsp::resample(Vector::Zero(1600), 2000.0, 16000.0).size() == 12800);
  CHECK(dsp::resample(Vector::Zero(16000), 16000.0, 2000.0).size() == 2000);
  CHECK(dsp::resample(Vector::Zero(801), 2000.0, 16000.0).size() == 6408);
}

TEST_CASE("resample rejects non-integer rate ratios") {
  CHECK_THROWS_AS(dsp::resample(Vector::Zero(100), 3000.0, 16000.0), Error);
  CHECK_THROWS_AS(dsp::resample(Vector::Zero(100), 0.0, 16000.0), Error);
}

TEST_CASE("upsampled sine tracks the analytic waveform away from the edges") {
  const double rate_in = 2000.0, rate_out = 16000.0, freq = 50.0;
  Vector coarse = sine(freq, rate_in, 2000);
  Vector up = dsp::resample(coarse, rate_in, rate_out);
  Vector ideal = sine(freq, rate_out, up.size());

  // Ignore filter warm-up at both ends.
  const Index skip = 800;
  const Index len = up.size() - 2 * skip;
  Matrix a = up.segment(skip, len);
  Matrix b = ideal.segment(skip, len);
  CHECK(eval::pcc(a, b) > 0.999);
  CHECK((a - b).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("resample is linear") {
  Vector a = sine(60.0, 2000.0, 500);
  Vector b = sine(173.0, 2000.0, 500, 0.7);
  Vector lhs = dsp::resample(a + b, 2000.0, 16000.0);
  Vector rhs = dsp::resample(a, 2000.0, 16000.0) + dsp::resample(b, 2000.0, 16000.0);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mel_frame_count implements 1 + floor((N - 400)/160)") {
  CHECK(dsp::mel_frame_count(16000) == 98);
  CHECK(dsp::mel_frame_count(12800) == 78);
  CHECK(dsp::mel_frame_count(6400) == 38);
  CHECK(dsp::mel_frame_count(3200) == 18);
  CHECK(dsp::mel_frame_count(400) == 1);
  CHECK(dsp::mel_frame_count(559) == 1);
  CHECK(dsp::mel_frame_count(560) == 2);
}

TEST_CASE("mel_spectrogram shape follows the frame formula for 13 and 80 bins") {
  SpeechWaveform wave{sine(440.0, 16000.0, 16000), 16000.0};
  MelSpectrogram m13 = dsp::mel_spectrogram(wave, 13);
  CHECK(m13.frames() == 98);
  CHECK(m13.bins() == 13);
  CHECK(m13.values.rows() == 98);
  CHECK(m13.values.cols() == 13);

  MelSpectrogram m80 = dsp::mel_spectrogram(wave, 80);
  CHECK(m80.frames() == 98);
  CHECK(m80.bins() == 80);
}

TEST_CASE("mel_spectrogram of silence sits exactly on the log floor") {
  SpeechWaveform wave{Vector::Zero(3200), 16000.0};
  MelSpectrogram m = dsp::mel_spectrogram(wave, 13);
  const float floor_value = float(std::log(kMelLogFloor));
  CHECK(m.values.minCoeff() == floor_value);
  CHECK(m.values.maxCoeff() == floor_value);
}

TEST_CASE("mel_spectrogram rejects bad inputs") {
  CHECK_THROWS_AS(dsp::mel_spectrogram(SpeechWaveform{Vector::Zero(3200), 2000.0}, 13), Error);
  CHECK_THROWS_AS(dsp::mel_spectrogram(SpeechWaveform{Vector::Zero(3200), 16000.0}, 40), Error);
  CHECK_THROWS_AS(dsp::mel_spectrogram(SpeechWaveform{Vector::Zero(399), 16000.0}, 13), Error);
  Vector bad = Vector::Zero(3200);
  bad[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dsp::mel_spectrogram(SpeechWaveform{bad, 16000.0}, 13), Error);
}

TEST_CASE("a pure tone lands in the mel bin whose filter peaks nearest its frequency") {
  const double freq = 1000.0;
  SpeechWaveform wave{sine(freq, 16000.0, 16000), 16000.0};
  MelSpectrogram m = dsp::mel_spectrogram(wave, 13);

  Matrix fb = dsp::mel_filterbank(13, 512, 16000.0, 0.0, 8000.0);
  const Index tone_col = Index(std::lround(freq / 16000.0 * 512.0));
  Index expected_bin = 0;
  fb.col(tone_col).maxCoeff(&expected_bin);

  // Energy concentrates in that bin for a mid-utterance frame.
  Index got_bin = 0;
  Vector frame = m.values.row(m.frames() / 2).cast<double>().transpose();
  frame.maxCoeff(&got_bin);
  CHECK(got_bin == expected_bin);
}

TEST_CASE("mel_filterbank rows are unit-peak, nonnegative, and banded") {
  Matrix fb = dsp::mel_filterbank(13, 512, 16000.0, 0.0, 8000.0);
  CHECK(fb.rows() == 13);
  CHECK(fb.cols() == 257);
  CHECK(fb.minCoeff() >= 0.0);
  for (Index r = 0; r < fb.rows(); ++r) {
    CHECK(fb.row(r).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Peak column indices strictly increase with the bin index.
  Index prev = -1;
  for (Index r = 0; r < fb.rows(); ++r) {
    Index peak = 0;
    fb.row(r).maxCoeff(&peak);
    CHECK(peak > prev);
    prev = peak;
  }
  CHECK_THROWS_AS(dsp::mel_filterbank(0, 512, 16000.0, 0.0, 8000.0), Error);
  CHECK_THROWS_AS(dsp::mel_filterbank(13, 512, 16000.0, 0.0, 9000.0), Error);
}

TEST_CASE("stft_magnitude frames tile the signal with the requested hop") {
  Vector x = sine(1000.0, 16000.0, 1200);
  Matrix s = dsp::stft_magnitude(x, 400, 160, 512);
  CHECK(s.rows() == 1 + (1200 - 400) / 160);
  CHECK(s.cols() == 257);
  CHECK(s.minCoeff() >= 0.0);

  // The tone concentrates at its FFT bin: 1000/16000*512 = 32.
  Index peak = 0;
  s.row(2).maxCoeff(&peak);
  CHECK(peak == 32);

  CHECK_THROWS_AS(dsp::stft_magnitude(Vector::Zero(100), 400, 160, 512), Error);
  CHECK_THROWS_AS(dsp::stft_magnitude(Vector::Zero(600), 400, 160, 256), Error);
}
