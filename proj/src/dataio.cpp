#include "braintalker/dataio.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace bt::dataio {

namespace {

std::string resolve_path(const std::string& path, const fs::path& base_dir) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (base_dir / p).string();
}

bool readable(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return f.good();
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  in.seekg(0, std::ios::end);
  std::vector<char> buf(std::size_t(in.tellg()));
  in.seekg(0);
  in.read(buf.data(), std::streamsize(buf.size()));
  require(in.good(), "short read from " + path);
  return buf;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

json load_sidecar(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "missing sidecar " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("malformed sidecar " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_manifest: cannot open " + path);
  const fs::path base_dir = fs::path(path).parent_path();

  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::set<std::pair<std::string, int>> word_trials;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("load_manifest: bad JSON on line " + std::to_string(lineno) + " of " + path + ": " +
           e.what());
    }
    ManifestEntry entry;
    try {
      entry.id = j.at("id").get<std::string>();
      entry.word_label = j.at("word_label").get<std::string>();
      entry.trial_index = j.at("trial_index").get<int>();
      entry.ecog_path = j.at("ecog_path").get<std::string>();
      entry.speech_path = j.at("speech_path").get<std::string>();
    } catch (const json::exception& e) {
      fail("load_manifest: line " + std::to_string(lineno) + " of " + path +
           " missing required field: " + e.what());
    }
    require(entry.trial_index >= 0, "load_manifest: entry '" + entry.id + "' has negative trial_index");
    if (!ids.insert(entry.id).second) fail("load_manifest: duplicate id '" + entry.id + "'");
    if (!word_trials.insert({entry.word_label, entry.trial_index}).second)
      fail("load_manifest: duplicate trial " + std::to_string(entry.trial_index) + " for word '" +
           entry.word_label + "' (entry '" + entry.id + "')");
    entry.ecog_path = resolve_path(entry.ecog_path, base_dir);
    entry.speech_path = resolve_path(entry.speech_path, base_dir);
    if (!readable(entry.ecog_path))
      fail("load_manifest: entry '" + entry.id + "': unreadable ecog_path " + entry.ecog_path);
    if (!readable(entry.speech_path))
      fail("load_manifest: entry '" + entry.id + "': unreadable speech_path " + entry.speech_path);
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_manifest: cannot open " + path);
  for (const auto& e : entries) {
    json j{{"id", e.id},
           {"word_label", e.word_label},
           {"trial_index", e.trial_index},
           {"ecog_path", e.ecog_path},
           {"speech_path", e.speech_path}};
    out << j.dump() << "\n";
  }
  require(out.good(), "write_manifest: write failed for " + path);
}

CorpusSplit split_corpus(const std::vector<ManifestEntry>& entries,
                         const std::string& unseen_word, int heldout_trial) {
  std::map<std::string, std::set<int>> trials_by_word;
  for (const auto& e : entries) trials_by_word[e.word_label].insert(e.trial_index);
  require(trials_by_word.count(unseen_word) > 0,
          "split_corpus: unseen word '" + unseen_word + "' not present in manifest");
  for (const auto& [word, trials] : trials_by_word) {
    if (word == unseen_word) continue;
    if (trials.count(heldout_trial) == 0)
      fail("split_corpus: word '" + word + "' has no trial " + std::to_string(heldout_trial) +
           " to hold out");
  }
  CorpusSplit split;
  for (const auto& e : entries) {
    if (e.word_label == unseen_word)
      split.unseen_test.push_back(e);
    else if (e.trial_index == heldout_trial)
      split.seen_test.push_back(e);
    else
      split.train.push_back(e);
  }
  return split;
}

// --- WAV -----------------------------------------------------------------

namespace {
constexpr std::uint16_t kWavFormatPcm = 1;
constexpr std::uint16_t kWavFormatFloat = 3;
}  // namespace

WavData read_wav(const std::string& path) {
  const std::vector<char> buf = read_all(path);
  require(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 &&
              std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          "read_wav: " + path + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* tag = buf.data() + pos;
    const std::uint32_t size = read_le<std::uint32_t>(buf.data() + pos + 4);
    pos += 8;
    require(pos + size <= buf.size(), "read_wav: truncated chunk in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      require(size >= 16, "read_wav: short fmt chunk in " + path);
      format = read_le<std::uint16_t>(buf.data() + pos);
      channels = read_le<std::uint16_t>(buf.data() + pos + 2);
      rate = read_le<std::uint32_t>(buf.data() + pos + 4);
      bits = read_le<std::uint16_t>(buf.data() + pos + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = buf.data() + pos;
      data_size = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }
  require(format != 0 && data != nullptr, "read_wav: missing fmt or data chunk in " + path);
  require(channels >= 1, "read_wav: zero channels in " + path);

  const std::size_t bytes_per_sample = bits / 8;
  require(bytes_per_sample > 0 && data_size % (bytes_per_sample * channels) == 0,
          "read_wav: data size not a whole number of frames in " + path);
  const std::size_t n_frames = data_size / (bytes_per_sample * channels);

  WavData wav;
  wav.sample_rate = double(rate);
  wav.samples.resize(channels, Index(n_frames));
  if (format == kWavFormatFloat && bits == 32) {
    for (std::size_t t = 0; t < n_frames; ++t)
      for (int c = 0; c < channels; ++c)
        wav.samples(c, Index(t)) = double(read_le<float>(data + (t * channels + c) * 4));
  } else if (format == kWavFormatPcm && bits == 16) {
    for (std::size_t t = 0; t < n_frames; ++t)
      for (int c = 0; c < channels; ++c)
        wav.samples(c, Index(t)) =
            double(read_le<std::int16_t>(data + (t * channels + c) * 2)) / 32768.0;
  } else {
    fail("read_wav: unsupported format " + std::to_string(format) + "/" + std::to_string(bits) +
         "-bit in " + path);
  }
  return wav;
}

void write_wav(const std::string& path, const Matrix& samples, double sample_rate) {
  require(samples.rows() >= 1, "write_wav: need at least one channel");
  require(samples.allFinite(), "write_wav: non-finite samples");
  const std::uint16_t channels = std::uint16_t(samples.rows());
  const std::uint32_t n_frames = std::uint32_t(samples.cols());
  const std::uint32_t data_size = n_frames * channels * 4;
  const std::uint16_t block_align = channels * 4;

  std::string out;
  out.reserve(60 + data_size);
  out.append("RIFF");
  append_le<std::uint32_t>(out, 4 + (8 + 16) + (8 + 4) + (8 + data_size));
  out.append("WAVE");
  out.append("fmt ");
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, kWavFormatFloat);
  append_le<std::uint16_t>(out, channels);
  append_le<std::uint32_t>(out, std::uint32_t(sample_rate));
  append_le<std::uint32_t>(out, std::uint32_t(sample_rate) * block_align);
  append_le<std::uint16_t>(out, block_align);
  append_le<std::uint16_t>(out, 32);
  out.append("fact");
  append_le<std::uint32_t>(out, 4);
  append_le<std::uint32_t>(out, n_frames);
  out.append("data");
  append_le<std::uint32_t>(out, data_size);
  for (std::uint32_t t = 0; t < n_frames; ++t)
    for (int c = 0; c < channels; ++c) append_le<float>(out, float(samples(c, Index(t))));

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_wav: cannot open " + path);
  f.write(out.data(), std::streamsize(out.size()));
  require(f.good(), "write_wav: write failed for " + path);
}

WavData read_raw_f32(const std::string& path) {
  const json sidecar = load_sidecar(path + ".json");
  require(sidecar.contains("channels") && sidecar.contains("sample_rate"),
          "read_raw_f32: sidecar for " + path + " needs {channels, sample_rate}");
  const int channels = sidecar["channels"].get<int>();
  const double rate = sidecar["sample_rate"].get<double>();
  require(channels >= 1, "read_raw_f32: sidecar channels must be >= 1 for " + path);
  const std::vector<char> buf = read_all(path);
  require(buf.size() % 4 == 0, "read_raw_f32: payload of " + path + " is not float32-aligned");
  const std::size_t total = buf.size() / 4;
  require(total % std::size_t(channels) == 0,
          "read_raw_f32: payload length of " + path + " inconsistent with sidecar channel count " +
              std::to_string(channels));
  const std::size_t n = total / std::size_t(channels);
  WavData wav;
  wav.sample_rate = rate;
  wav.samples.resize(channels, Index(n));
  for (int c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < n; ++t)
      wav.samples(c, Index(t)) = double(read_le<float>(buf.data() + (std::size_t(c) * n + t) * 4));
  return wav;
}

void write_raw_f32(const std::string& path, const Matrix& samples, double sample_rate) {
  std::string out;
  out.reserve(std::size_t(samples.size()) * 4);
  for (Index c = 0; c < samples.rows(); ++c)
    for (Index t = 0; t < samples.cols(); ++t) append_le<float>(out, float(samples(c, t)));
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_raw_f32: cannot open " + path);
  f.write(out.data(), std::streamsize(out.size()));
  require(f.good(), "write_raw_f32: write failed for " + path);
  json sidecar{{"channels", samples.rows()}, {"sample_rate", sample_rate}};
  std::ofstream s(path + ".json");
  require(s.good(), "write_raw_f32: cannot open sidecar for " + path);
  s << sidecar.dump(2) << "\n";
}

EcogRecording read_ecog(const std::string& path) {
  const bool is_wav = path.size() >= 4 && path.substr(path.size() - 4) == ".wav";
  WavData wav = is_wav ? read_wav(path) : read_raw_f32(path);
  require(wav.sample_rate > 0, "read_ecog: nonpositive sample rate in " + path);
  require(wav.samples.allFinite(), "read_ecog: non-finite samples in " + path);
  EcogRecording rec;
  rec.samples = std::move(wav.samples);
  rec.sample_rate = wav.sample_rate;
  return rec;
}

SpeechWaveform read_speech(const std::string& path) {
  WavData wav = read_wav(path);
  require(wav.samples.rows() == 1,
          "read_speech: expected mono, got " + std::to_string(wav.samples.rows()) + " channels in " + path);
  require(wav.sample_rate == 16000.0,
          "read_speech: expected 16000 Hz, got " + std::to_string(int(wav.sample_rate)) + " Hz in " + path);
  require(wav.samples.allFinite(), "read_speech: non-finite samples in " + path);
  require(wav.samples.cwiseAbs().maxCoeff() <= 1.0 + 1e-6,
          "read_speech: samples outside [-1, 1] in " + path);
  SpeechWaveform speech;
  speech.samples = wav.samples.row(0).transpose();
  speech.sample_rate = wav.sample_rate;
  return speech;
}

std::pair<EcogRecording, SpeechWaveform> read_recording(const ManifestEntry& entry) {
  return {read_ecog(entry.ecog_path), read_speech(entry.speech_path)};
}

// --- mel exchange format ---------------------------------------------------

void write_mel(const MelSpectrogram& mel, const std::string& path) {
  require(mel.values.allFinite(), "write_mel: non-finite mel values");
  std::string out;
  out.reserve(std::size_t(mel.values.size()) * 4);
  for (Index t = 0; t < mel.frames(); ++t)
    for (Index b = 0; b < mel.bins(); ++b) append_le<float>(out, mel.values(t, b));
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_mel: cannot open " + path);
  f.write(out.data(), std::streamsize(out.size()));
  require(f.good(), "write_mel: write failed for " + path);

  json sidecar{{"frames", mel.frames()}, {"bins", mel.bins()},   {"hop_ms", kMelHopMs},
               {"win_ms", kMelWinMs},    {"log_base", "natural"}};
  std::ofstream s(path + ".json");
  require(s.good(), "write_mel: cannot open sidecar for " + path);
  s << sidecar.dump(2) << "\n";
  require(s.good(), "write_mel: sidecar write failed for " + path);
}

MelSpectrogram read_mel(const std::string& path) {
  const json sidecar = load_sidecar(path + ".json");
  require(sidecar.contains("frames") && sidecar.contains("bins"),
          "read_mel: sidecar for " + path + " needs {frames, bins}");
  const Index frames = sidecar["frames"].get<Index>();
  const Index bins = sidecar["bins"].get<Index>();
  require(frames >= 1 && bins >= 1, "read_mel: bad dimensions in sidecar for " + path);
  const std::vector<char> buf = read_all(path);
  if (buf.size() != std::size_t(frames) * std::size_t(bins) * 4)
    fail("read_mel: sidecar says " + std::to_string(frames) + "x" + std::to_string(bins) +
         " but payload holds " + std::to_string(buf.size() / 4) + " float32 values in " + path);
  MelSpectrogram mel;
  mel.values.resize(frames, bins);
  for (Index t = 0; t < frames; ++t)
    for (Index b = 0; b < bins; ++b)
      mel.values(t, b) = read_le<float>(buf.data() + std::size_t(t * bins + b) * 4);
  return mel;
}

}  // namespace bt::dataio
