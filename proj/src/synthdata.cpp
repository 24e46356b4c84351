#include "braintalker/synthdata.hpp"

#include "braintalker/dsp.hpp"
#include "braintalker/eval.hpp"
#include "braintalker/rng.hpp"
#include "json.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

namespace bt::synth {

namespace {

using nlohmann::json;

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kCarriers = 3;
constexpr double kCarrierAmp[kCarriers] = {1.0, 0.85, 0.7};
constexpr double kMelCorrLimit = 0.9;  // cross-word distinctness bound

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

std::string two_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

// A "word" is a fixed time-frequency pattern: 1-4 syllable bursts at
// word-specific positions, each burst activating a word-specific subset of
// three carriers whose frequencies are drawn uniformly on the mel scale.
// Trials add small frequency/phase jitter and a gain, so same-word trials
// stay close while different words share little structure in either time or
// frequency (mismatched pairs must look uncorrelated).
SpeechWaveform speech_with_salt(const SynthConfig& cfg, int word, std::uint64_t salt, int trial) {
  const Index n = Index(std::llround(cfg.duration_s * 16000.0));
  Rng word_rng(derive_seed(cfg.seed, {hash_label("word"), std::uint64_t(word), salt}));
  double freq[kCarriers], rate[kCarriers], phase[kCarriers];
  // uniform on the mel scale so every mel bin is equally likely per word
  for (int i = 0; i < kCarriers; ++i) {
    freq[i] = mel_to_hz(word_rng.uniform(hz_to_mel(120.0), hz_to_mel(7600.0)));
    rate[i] = word_rng.uniform(2.0, 7.0);
    phase[i] = word_rng.uniform(0.0, kTwoPi);
  }

  const double margin = std::min(0.03, cfg.duration_s / 8.0);
  const Index margin_n = Index(std::llround(margin * 16000.0));
  const Index span_n = n - 2 * margin_n;
  const int n_syl = cfg.duration_s < 0.3 ? 1 : 1 + int(word_rng.uniform_int(4));
  struct Syllable {
    Index on, len;  // circular position within the span, in samples
    double gain[kCarriers];
  };
  std::vector<Syllable> syllables;
  // Sparse coverage and circular burst placement are deliberate: with every
  // word mostly "on", or with coverage piled into the middle, mismatched
  // pairs share activity structure and stop looking uncorrelated.
  // Rejection-sample until the burst union covers 20-50% of the utterance;
  // draws stay on word_rng so this is deterministic per word.
  const double target_active = word_rng.uniform(0.25, 0.45);
  for (int attempt = 0; attempt < 64; ++attempt) {
    syllables.clear();
    std::vector<bool> covered(std::size_t(span_n), false);
    for (int s = 0; s < n_syl; ++s) {
      Syllable syl;
      const double len_s = cfg.duration_s * target_active * word_rng.uniform(0.8, 1.2) / n_syl;
      syl.len = std::min(span_n, Index(std::llround(len_s * 16000.0)));
      syl.on = Index(word_rng.uniform_int(std::uint64_t(span_n)));
      bool any = false;
      for (int i = 0; i < kCarriers; ++i) {
        syl.gain[i] = word_rng.uniform() < 0.5 ? 0.0 : word_rng.uniform(0.5, 1.0);
        any = any || syl.gain[i] > 0.0;
      }
      if (!any) syl.gain[int(word_rng.uniform_int(kCarriers))] = 1.0;
      for (Index k = 0; k < syl.len; ++k) covered[std::size_t((syl.on + k) % span_n)] = true;
      syllables.push_back(syl);
    }
    const Index active = Index(std::count(covered.begin(), covered.end(), true));
    bool carrier_used[kCarriers] = {};
    for (const Syllable& s : syllables)
      for (int i = 0; i < kCarriers; ++i) carrier_used[i] = carrier_used[i] || s.gain[i] > 0.0;
    const bool all_used = carrier_used[0] && carrier_used[1] && carrier_used[2];
    if (active >= Index(0.2 * double(n)) && active <= Index(0.5 * double(n)) &&
        (all_used || n_syl < 3))
      break;
  }

  Rng trial_rng(
      derive_seed(cfg.seed, {hash_label("trial"), std::uint64_t(word), salt,
                             std::uint64_t(trial)}));
  double fjit[kCarriers], pjit[kCarriers];
  for (int i = 0; i < kCarriers; ++i) {
    fjit[i] = 1.0 + 0.02 * trial_rng.uniform(-1.0, 1.0);
    pjit[i] = trial_rng.uniform(-0.3, 0.3);
  }
  const double amp = trial_rng.uniform(0.85, 1.0);

  const Index edge_n = std::min(Index(std::llround(0.015 * 16000.0)), span_n / 8);
  Vector x = Vector::Zero(n);
  for (const Syllable& syl : syllables) {
    const Index e = std::min(edge_n, syl.len / 2);
    for (Index k = 0; k < syl.len; ++k) {
      double w = 1.0;  // raised-cosine burst edges, applied per wrapped piece
      if (k < e)
        w = 0.5 - 0.5 * std::cos(M_PI * double(k) / double(e));
      else if (k >= syl.len - e)
        w = 0.5 - 0.5 * std::cos(M_PI * double(syl.len - 1 - k) / double(e));
      const Index pos = (syl.on + k) % span_n;
      // fade wrapped pieces at the span boundaries so the wrap never clicks
      if (pos < e) w *= 0.5 - 0.5 * std::cos(M_PI * double(pos) / double(e));
      else if (pos >= span_n - e)
        w *= 0.5 - 0.5 * std::cos(M_PI * double(span_n - 1 - pos) / double(e));
      const Index idx = margin_n + pos;
      const double t = double(idx) / 16000.0;
      double sample = 0.0;
      for (int i = 0; i < kCarriers; ++i) {
        if (syl.gain[i] == 0.0) continue;
        const double env = 0.55 + 0.45 * std::sin(kTwoPi * rate[i] * t + phase[i] + pjit[i]);
        sample += syl.gain[i] * kCarrierAmp[i] * env * std::sin(kTwoPi * freq[i] * fjit[i] * t);
      }
      x[idx] += w * sample;
    }
  }

  const double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.0) x *= 0.95 * amp / peak;
  return SpeechWaveform{std::move(x), 16000.0};
}

// Sub-band energy envelopes at the ECoG rate: FFT band masking, rectify,
// 25 ms moving average, anti-aliased decimation to 2 kHz.
std::vector<Vector> band_envelopes_2k(const Vector& speech, int bands) {
  const Index n = speech.size();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  std::vector<double> time(speech.data(), speech.data() + n);
  fft.fwd(spectrum, time);

  const double f_lo = 80.0, f_hi = 7900.0;
  std::vector<Vector> envelopes;
  envelopes.reserve(std::size_t(bands));
  for (int b = 0; b < bands; ++b) {
    const double lo = f_lo * std::pow(f_hi / f_lo, double(b) / bands);
    const double hi = f_lo * std::pow(f_hi / f_lo, double(b + 1) / bands);
    std::vector<std::complex<double>> masked(spectrum.size(), {0.0, 0.0});
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      const double f = double(std::min(k, spectrum.size() - k)) * 16000.0 / double(n);
      if (f >= lo && f < hi) masked[k] = spectrum[k];
    }
    std::vector<double> band;
    fft.inv(band, masked);

    Vector rect(n);
    for (Index i = 0; i < n; ++i) rect[i] = std::abs(band[std::size_t(i)]);
    // centered 400-sample box average via prefix sums, edges clamped
    Vector cum = Vector::Zero(n + 1);
    for (Index i = 0; i < n; ++i) cum[i + 1] = cum[i] + rect[i];
    Vector smooth(n);
    const Index half = 200;
    for (Index i = 0; i < n; ++i) {
      const Index a = std::max(Index(0), i - half);
      const Index z = std::min(n, i + half + 1);
      smooth[i] = (cum[z] - cum[a]) / double(z - a);
    }
    envelopes.push_back(dsp::resample(smooth, 16000.0, 2000.0));
  }
  return envelopes;
}

}  // namespace

void validate(const SynthConfig& c) {
  require(c.duration_s >= 0.025, "duration_s must be >= 0.025");
  require(c.channels >= 1, "channels must be >= 1");
  require(c.n_words >= 1 && c.trials_per_word >= 1, "n_words and trials_per_word must be >= 1");
  require(c.bands >= 1 && c.mixing_taps >= 1, "bands and mixing_taps must be >= 1");
  require(c.snr_db == c.snr_db, "snr_db must not be NaN");
}

SynthConfig synth_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(std::string("bad config JSON: ") + e.what());
  }
  require(j.is_object(), "config JSON must be an object");
  static const std::set<std::string> known = {"seed",    "n_words", "trials_per_word", "duration_s",
                                              "channels", "snr_db",  "bands",           "mixing_taps"};
  for (const auto& [key, value] : j.items())
    require(known.count(key) != 0, "unknown config key '" + key + "'");
  SynthConfig c;
  c.seed = j.value("seed", std::uint64_t(1));
  c.n_words = j.value("n_words", 12);
  c.trials_per_word = j.value("trials_per_word", 12);
  c.duration_s = j.value("duration_s", 0.8);
  c.channels = j.value("channels", 8);
  if (j.contains("snr_db")) {
    const json& s = j.at("snr_db");
    if (s.is_string()) {
      require(s.get<std::string>() == "inf", "snr_db must be a number or \"inf\"");
      c.snr_db = std::numeric_limits<double>::infinity();
    } else {
      c.snr_db = s.get<double>();
    }
  }
  c.bands = j.value("bands", 6);
  c.mixing_taps = j.value("mixing_taps", 9);
  validate(c);
  return c;
}

SynthGenerator::SynthGenerator(const SynthConfig& config) : cfg_(config) {
  validate(cfg_);
  salts_.assign(std::size_t(cfg_.n_words), 0);
  // Resolve per-word salts so every cross-word mel correlation stays below
  // the distinctness bound, over all trials.
  std::vector<std::vector<Matrix>> kept;  // per word, per trial log-mel
  kept.reserve(std::size_t(cfg_.n_words));
  for (int w = 0; w < cfg_.n_words; ++w) {
    bool resolved = false;
    for (std::uint64_t salt = 0; salt < 100 && !resolved; ++salt) {
      std::vector<Matrix> mels;
      mels.reserve(std::size_t(cfg_.trials_per_word));
      for (int t = 0; t < cfg_.trials_per_word; ++t)
        mels.push_back(
            dsp::mel_spectrogram(speech_with_salt(cfg_, w, salt, t), 13).values.cast<double>());
      bool distinct = true;
      for (const auto& other_word : kept) {
        for (const Matrix& a : other_word)
          for (const Matrix& b : mels)
            if (eval::pcc(a, b) >= kMelCorrLimit) {
              distinct = false;
              break;
            }
        if (!distinct) break;
      }
      if (distinct) {
        salts_[std::size_t(w)] = salt;
        kept.push_back(std::move(mels));
        resolved = true;
      }
    }
    require(resolved, "could not make word " + std::to_string(w) +
                          " acoustically distinct after 100 salts");
  }
}

SpeechWaveform SynthGenerator::speech(int word_id, int trial) const {
  require(word_id >= 0 && word_id < cfg_.n_words, "word_id out of range");
  require(trial >= 0 && trial < cfg_.trials_per_word, "trial out of range");
  return speech_with_salt(cfg_, word_id, salts_[std::size_t(word_id)], trial);
}

EcogRecording SynthGenerator::ecog(const SpeechWaveform& speech,
                                   std::uint64_t noise_stream) const {
  return derive_ecog(speech, cfg_, noise_stream);
}

EcogRecording derive_ecog(const SpeechWaveform& speech, const SynthConfig& cfg,
                          std::uint64_t noise_stream) {
  require(std::abs(speech.sample_rate - 16000.0) < 1e-6, "derive_ecog expects 16 kHz speech");
  const std::vector<Vector> envelopes = band_envelopes_2k(speech.samples, cfg.bands);
  const Index n2k = envelopes.front().size();

  EcogRecording rec;
  rec.sample_rate = 2000.0;
  rec.samples = Matrix::Zero(cfg.channels, n2k);
  for (int c = 0; c < cfg.channels; ++c) {
    // channel-specific FIR mixture of the band envelopes, unit-energy taps
    Matrix taps(cfg.bands, cfg.mixing_taps);
    Rng mix_rng(derive_seed(cfg.seed, {hash_label("mixing"), std::uint64_t(c)}));
    for (int b = 0; b < cfg.bands; ++b)
      for (int tap = 0; tap < cfg.mixing_taps; ++tap)
        taps(b, tap) = mix_rng.uniform(-1.0, 1.0);
    taps /= taps.norm();

    Vector y = Vector::Zero(n2k);
    for (int b = 0; b < cfg.bands; ++b)
      for (int tap = 0; tap < cfg.mixing_taps; ++tap) {
        const double h = taps(b, tap);
        for (Index i = tap; i < n2k; ++i) y[i] += h * envelopes[std::size_t(b)][i - tap];
      }

    if (std::isfinite(cfg.snr_db)) {
      const double power = y.squaredNorm() / double(n2k);
      const double sigma = std::sqrt(power / std::pow(10.0, cfg.snr_db / 10.0));
      Rng noise_rng(
          derive_seed(cfg.seed, {hash_label("noise"), noise_stream, std::uint64_t(c)}));
      for (Index i = 0; i < n2k; ++i) y[i] += sigma * noise_rng.gaussian();
    }
    rec.samples.row(c) = y.transpose();
  }
  return rec;
}

SpeechWaveform generate_speech_like(int word_id, int trial, const SynthConfig& config) {
  return SynthGenerator(config).speech(word_id, trial);
}

std::string generate_corpus(const SynthConfig& config, const std::string& out_dir) {
  SynthGenerator gen(config);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "ecog");
  fs::create_directories(fs::path(out_dir) / "speech");

  std::vector<dataio::ManifestEntry> entries;
  entries.reserve(std::size_t(config.n_words * config.trials_per_word));
  for (int w = 0; w < config.n_words; ++w)
    for (int t = 0; t < config.trials_per_word; ++t) {
      const std::string stem = "word" + two_digits(w) + "_trial" + two_digits(t);
      SpeechWaveform sw = gen.speech(w, t);
      EcogRecording rec =
          gen.ecog(sw, derive_seed(config.seed,
                                   {hash_label("pair"), std::uint64_t(w), std::uint64_t(t)}));
      dataio::ManifestEntry e;
      e.id = stem;
      e.word_label = "word" + two_digits(w);
      e.trial_index = t;
      e.speech_path = "speech/" + stem + ".wav";
      e.ecog_path = "ecog/" + stem + ".wav";
      dataio::write_wav(out_dir + "/" + e.speech_path, sw.samples.transpose(), 16000.0);
      dataio::write_wav(out_dir + "/" + e.ecog_path, rec.samples, 2000.0);
      entries.push_back(std::move(e));
    }
  const std::string manifest = out_dir + "/manifest.jsonl";
  dataio::write_manifest(entries, manifest);
  return manifest;
}

namespace {

// Frame-aligned channel means: row f holds the per-channel mean of the ECoG
// samples under mel frame f's analysis window, plus a bias 1.
Matrix frame_features(const EcogRecording& rec, Index frames) {
  const double sr = rec.sample_rate;
  const Index win = Index(std::llround(0.025 * sr));
  const Index hop = Index(std::llround(0.010 * sr));
  const Index channels = rec.samples.rows();
  Matrix f(frames, channels + 1);
  for (Index t = 0; t < frames; ++t) {
    const Index start = t * hop;
    const Index len = std::min(win, rec.samples.cols() - start);
    require(len > 0, "recording too short for the requested frame count");
    for (Index c = 0; c < channels; ++c) f(t, c) = rec.samples.row(c).segment(start, len).mean();
    f(t, channels) = 1.0;
  }
  return f;
}

}  // namespace

EnvelopeOracleResult envelope_oracle(const dataio::CorpusSplit& split, int mel_bins) {
  require(!split.train.empty(), "envelope_oracle: empty train split");
  const auto& heldout = split.seen_test.empty() ? split.train : split.seen_test;

  std::vector<std::pair<Matrix, Matrix>> train_rows, held_rows;  // (features, mel)
  auto gather = [mel_bins](const std::vector<dataio::ManifestEntry>& entries,
                           std::vector<std::pair<Matrix, Matrix>>& rows) {
    for (const auto& entry : entries) {
      auto [rec, speech] = dataio::read_recording(entry);
      const Matrix mel = dsp::mel_spectrogram(speech, mel_bins).values.cast<double>();
      rows.emplace_back(frame_features(rec, mel.rows()), mel);
    }
  };
  gather(split.train, train_rows);
  gather(heldout, held_rows);

  Index total = 0;
  for (const auto& [f, m] : train_rows) total += f.rows();
  Matrix f_all(total, train_rows.front().first.cols());
  Matrix m_all(total, train_rows.front().second.cols());
  Index at = 0;
  for (const auto& [f, m] : train_rows) {
    f_all.middleRows(at, f.rows()) = f;
    m_all.middleRows(at, m.rows()) = m;
    at += f.rows();
  }
  const Matrix w = f_all.colPivHouseholderQr().solve(m_all);

  auto mean_pcc = [&w](const std::vector<std::pair<Matrix, Matrix>>& rows) {
    double sum = 0.0;
    for (const auto& [f, m] : rows) sum += eval::pcc(f * w, m);
    return sum / double(rows.size());
  };
  return EnvelopeOracleResult{mean_pcc(train_rows), mean_pcc(held_rows)};
}

}  // namespace bt::synth
