#include "braintalker/training.hpp"

#include "braintalker/dsp.hpp"
#include "braintalker/rng.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

namespace bt {

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[6] = {'B', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json extractor_to_json(const ExtractorSpec& e) {
  return json{{"kind", e.kind == ExtractorSpec::Kind::kScratch ? "scratch" : "pretrained"},
              {"dim", e.dim},
              {"frozen", e.frozen},
              {"blocks", e.blocks},
              {"ffn_dim", e.ffn_dim},
              {"heads", e.heads},
              {"init_seed", e.init_seed},
              {"cache_dir", e.cache_dir}};
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where);

ExtractorSpec extractor_from_json(const json& j) {
  reject_unknown_keys(
      j, {"kind", "dim", "frozen", "blocks", "ffn_dim", "heads", "init_seed", "cache_dir"},
      "extractor config");
  ExtractorSpec e;
  const std::string kind = j.value("kind", "scratch");
  if (kind == "scratch")
    e.kind = ExtractorSpec::Kind::kScratch;
  else if (kind == "pretrained")
    e.kind = ExtractorSpec::Kind::kPretrained;
  else
    fail("extractor kind must be 'scratch' or 'pretrained', got '" + kind + "'");
  e.dim = j.value("dim", kind == "pretrained" ? 768 : 512);
  e.frozen = j.value("frozen", true);
  e.blocks = j.value("blocks", 12);
  e.ffn_dim = j.value("ffn_dim", 128);
  e.heads = j.value("heads", 8);
  e.init_seed = j.value("init_seed", std::uint64_t(1));
  e.cache_dir = j.value("cache_dir", "");
  return e;
}

json config_to_json_obj(const TrainConfig& c) {
  return json{{"lambda_mel", c.lambda_mel},
              {"lambda_lf", c.lambda_lf},
              {"lr0", c.lr0},
              {"lr_decay", c.lr_decay},
              {"lr_decay_interval", c.lr_decay_interval},
              {"epochs", c.epochs},
              {"mel_bins", c.mel_bins},
              {"use_lf", c.use_lf},
              {"seed", c.seed},
              {"checkpoint_interval", c.checkpoint_interval},
              {"extractor", extractor_to_json(c.extractor)},
              {"melgen",
               {{"model_dim", c.melgen.model_dim},
                {"heads", c.melgen.heads},
                {"ffn_dim", c.melgen.ffn_dim},
                {"blocks", c.melgen.blocks}}},
              {"paths", {{"manifest", c.paths.manifest}, {"out_dir", c.paths.out_dir}}}};
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  require(j.is_object(), where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    require(known.count(key) != 0, "unknown config key '" + key + "' in " + where);
}

TrainConfig config_from_json_obj(const json& j) {
  reject_unknown_keys(j,
                      {"lambda_mel", "lambda_lf", "lr0", "lr_decay", "lr_decay_interval", "epochs",
                       "mel_bins", "use_lf", "seed", "checkpoint_interval", "extractor", "melgen",
                       "paths"},
                      "train config");
  TrainConfig c;
  c.lambda_mel = j.value("lambda_mel", 1.0);
  c.lambda_lf = j.value("lambda_lf", 1.0);
  c.lr0 = j.value("lr0", 5e-5);
  c.lr_decay = j.value("lr_decay", 0.9);
  c.lr_decay_interval = j.value("lr_decay_interval", 100);
  c.epochs = j.value("epochs", 1000);
  c.mel_bins = j.value("mel_bins", 13);
  c.use_lf = j.value("use_lf", true);
  c.seed = j.value("seed", std::uint64_t(1));
  c.checkpoint_interval = j.value("checkpoint_interval", 100);
  if (j.contains("extractor")) c.extractor = extractor_from_json(j.at("extractor"));
  if (j.contains("melgen")) {
    const json& m = j.at("melgen");
    reject_unknown_keys(m, {"model_dim", "heads", "ffn_dim", "blocks"}, "melgen config");
    c.melgen.model_dim = m.value("model_dim", 256);
    c.melgen.heads = m.value("heads", 4);
    c.melgen.ffn_dim = m.value("ffn_dim", 1024);
    c.melgen.blocks = m.value("blocks", 8);
  }
  if (j.contains("paths")) {
    reject_unknown_keys(j.at("paths"), {"manifest", "out_dir"}, "paths config");
    c.paths.manifest = j.at("paths").value("manifest", "");
    c.paths.out_dir = j.at("paths").value("out_dir", "");
  }
  validate(c);
  return c;
}

}  // namespace

void validate(const TrainConfig& c) {
  require(c.lambda_mel >= 0.0 && c.lambda_lf >= 0.0, "loss weights must be >= 0");
  require(c.lr0 > 0.0, "lr0 must be > 0");
  require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  require(c.lr_decay_interval >= 1, "lr_decay_interval must be >= 1");
  require(c.epochs >= 0, "epochs must be >= 0");
  require(c.mel_bins == 13 || c.mel_bins == 80, "mel_bins must be 13 or 80");
  require(c.checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(std::string("bad config JSON: ") + e.what());
  }
  return config_from_json_obj(j);
}

std::string train_config_to_json(const TrainConfig& config) {
  return config_to_json_obj(config).dump(2);
}

double mel_loss(const MelSpectrogram& pred, const MelSpectrogram& target) {
  if (pred.values.rows() != target.values.rows() || pred.values.cols() != target.values.cols())
    fail("mel_loss: shape mismatch " + std::to_string(pred.values.rows()) + "x" +
         std::to_string(pred.values.cols()) + " vs " + std::to_string(target.values.rows()) +
         "x" + std::to_string(target.values.cols()));
  return (pred.values.cast<double>() - target.values.cast<double>()).norm();
}

double latent_feature_loss(const FeatureSequence& c, const FeatureSequence& s) {
  if (c.values.rows() != s.values.rows() || c.values.cols() != s.values.cols())
    fail("latent_feature_loss: shape mismatch " + std::to_string(c.values.rows()) + "x" +
         std::to_string(c.values.cols()) + " vs " + std::to_string(s.values.rows()) + "x" +
         std::to_string(s.values.cols()));
  return (c.values - s.values).norm();
}

double total_loss(double l_mel, double l_lf, const TrainConfig& config) {
  const double lambda_lf = config.use_lf ? config.lambda_lf : 0.0;
  return config.lambda_mel * l_mel + lambda_lf * l_lf;
}

double lr_at(int epoch, const TrainConfig& config) {
  require(epoch >= 0, "lr_at: epoch must be >= 0");
  return config.lr0 * std::pow(config.lr_decay, epoch / config.lr_decay_interval);
}

void AdamOptimizer::step(
    double lr, const std::vector<std::pair<nn::ParamStore*, const nn::TapeBinding*>>& groups) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    nn::ParamStore& store = *groups[g].first;
    const nn::TapeBinding& binding = *groups[g].second;
    for (const std::string& name : store.names()) {
      Matrix& p = store.at(name);
      const Matrix grad = binding.grad(name);
      Slot& slot = slots_["g" + std::to_string(g) + "." + name];
      if (slot.m.size() == 0) {
        slot.m = Matrix::Zero(p.rows(), p.cols());
        slot.v = Matrix::Zero(p.rows(), p.cols());
      }
      slot.m = beta1_ * slot.m + (1.0 - beta1_) * grad;
      slot.v = beta2_ * slot.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
      const Matrix mhat = slot.m / bc1;
      const Matrix vhat = slot.v / bc2;
      p.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }
}

void AdamOptimizer::restore(int t, std::map<std::string, Slot> slots) {
  t_ = t;
  slots_ = std::move(slots);
}

ModelBundle make_model(const TrainConfig& config, int channels) {
  validate(config);
  require(channels >= 1, "make_model: channels must be >= 1");
  ModelBundle m;
  m.config = config;
  m.channels = channels;
  m.extractor = make_extractor(config.extractor);
  m.scratch = dynamic_cast<ScratchExtractor*>(m.extractor.get());
  m.encoder = std::make_unique<LatentEncoder>(channels, config.extractor.dim);
  nn::init_params(m.encoder->params(), derive_seed(config.seed, {hash_label("encoder")}));
  MelGenConfig mg = config.melgen;
  mg.input_dim = config.extractor.dim;
  mg.bins = config.mel_bins;
  m.melgen = std::make_unique<MelGenerator>(mg);
  nn::init_params(m.melgen->params(), derive_seed(config.seed, {hash_label("melgen")}));
  return m;
}

MelSpectrogram predict_mel(const ModelBundle& model, const EcogRecording& rec,
                           Index target_frames) {
  EcogRecording prepared = prepare_ecog(rec);
  require(prepared.samples.rows() == model.channels,
          "recording has " + std::to_string(prepared.samples.rows()) +
              " channels, model expects " + std::to_string(model.channels));
  CoarseBrainRepresentation z = extract_ecog(prepared, *model.extractor);
  FeatureSequence c = model.encoder->encode(z);
  return model.melgen->generate_mel(c, target_frames);
}

MelSpectrogram synthesize_mel(const ModelBundle& model, const EcogRecording& rec) {
  const Index n16k = Index(std::llround(double(rec.samples.cols()) * 16000.0 / rec.sample_rate));
  Index target = dsp::mel_frame_count(n16k);
  const Index doubled = 2 * frontend_frame_count(n16k);
  target = std::min(target, doubled);
  target = std::max(target, doubled - 2);
  return predict_mel(model, rec, target);
}

// --- checkpoint io ---------------------------------------------------------------

namespace {

struct ParamGroups {
  std::vector<std::pair<std::string, nn::ParamStore*>> groups;
};

ParamGroups model_groups(ModelBundle& model) {
  ParamGroups g;
  g.groups.emplace_back("encoder", &model.encoder->params());
  g.groups.emplace_back("melgen", &model.melgen->params());
  if (model.extractor_trainable()) g.groups.emplace_back("extractor", &model.scratch->params());
  return g;
}

void write_doubles(std::ofstream& out, const Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

void read_doubles(std::ifstream& in, Matrix& m, const std::string& what) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      require(in.gcount() == sizeof v, "checkpoint truncated while reading " + what);
      m(r, c) = v;
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& model,
                     const AdamOptimizer& adam, int epochs_done, double best_val) {
  ParamGroups groups = model_groups(const_cast<ModelBundle&>(model));
  json params = json::array();
  for (const auto& [gname, store] : groups.groups)
    for (const std::string& name : store->names()) {
      const Matrix& m = store->at(name);
      params.push_back({{"group", gname}, {"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    }
  json slots = json::array();
  for (const auto& [key, slot] : adam.slots())
    slots.push_back({{"key", key}, {"rows", slot.m.rows()}, {"cols", slot.m.cols()}});
  json header{{"version", kCheckpointVersion},
              {"epochs_done", epochs_done},
              {"channels", model.channels},
              // +infinity (no validation improvement yet) has no JSON number form; use null.
              {"best_val", std::isfinite(best_val) ? json(best_val) : json()},
              {"config", config_to_json_obj(model.config)},
              {"params", params},
              {"adam", {{"t", adam.step_count()}, {"slots", slots}}}};
  const std::string header_text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header_text.data(), std::streamsize(header_text.size()));
    for (const auto& [gname, store] : groups.groups)
      for (const std::string& name : store->names()) write_doubles(out, store->at(name));
    for (const auto& [key, slot] : adam.slots()) {
      write_doubles(out, slot.m);
      write_doubles(out, slot.v);
    }
    require(out.good(), "write failed for checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint " + path);
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  require(in.gcount() == sizeof magic && std::equal(magic, magic + sizeof magic, kCheckpointMagic),
          "not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  require(version == kCheckpointVersion,
          "checkpoint format version " + std::to_string(version) + " (this build reads version " +
              std::to_string(kCheckpointVersion) + ")");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  require(in.good() && header_len > 0 && header_len < (std::uint64_t(1) << 31),
          "corrupt checkpoint header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), std::streamsize(header_len));
  require(in.gcount() == std::streamsize(header_len), "checkpoint truncated in header");
  json header;
  try {
    header = json::parse(header_text);
  } catch (const std::exception& e) {
    fail("corrupt checkpoint header: " + std::string(e.what()));
  }

  LoadedCheckpoint loaded;
  const TrainConfig config = config_from_json_obj(header.at("config"));
  loaded.model = make_model(config, header.at("channels").get<int>());
  loaded.epochs_done = header.at("epochs_done").get<int>();
  const json& best_val_field = header.at("best_val");
  loaded.best_val = best_val_field.is_null() ? std::numeric_limits<double>::infinity()
                                             : best_val_field.get<double>();

  ParamGroups groups = model_groups(loaded.model);
  auto find_store = [&groups](const std::string& gname) -> nn::ParamStore* {
    for (auto& [name, store] : groups.groups)
      if (name == gname) return store;
    return nullptr;
  };
  for (const json& entry : header.at("params")) {
    const std::string gname = entry.at("group").get<std::string>();
    const std::string name = entry.at("name").get<std::string>();
    nn::ParamStore* store = find_store(gname);
    require(store != nullptr, "checkpoint names unknown parameter group '" + gname + "'");
    Matrix& m = store->at(name);
    require(m.rows() == entry.at("rows").get<Index>() && m.cols() == entry.at("cols").get<Index>(),
            "checkpoint tensor '" + gname + "." + name + "' has unexpected shape");
    read_doubles(in, m, gname + "." + name);
    require(m.allFinite(), "checkpoint tensor '" + gname + "." + name + "' is non-finite");
  }
  std::map<std::string, AdamOptimizer::Slot> slots;
  for (const json& entry : header.at("adam").at("slots")) {
    const std::string key = entry.at("key").get<std::string>();
    AdamOptimizer::Slot slot;
    slot.m = Matrix::Zero(entry.at("rows").get<Index>(), entry.at("cols").get<Index>());
    slot.v = slot.m;
    read_doubles(in, slot.m, "adam m of " + key);
    read_doubles(in, slot.v, "adam v of " + key);
    slots.emplace(key, std::move(slot));
  }
  loaded.adam.restore(header.at("adam").at("t").get<int>(), std::move(slots));
  in.peek();
  require(in.eof(), "checkpoint has trailing bytes");
  return loaded;
}

// --- training loop -----------------------------------------------------------------

namespace {

// Everything a step needs, loaded or extracted once up front. For frozen
// extractors z/s hold cached latents; for trainable ones the conditioned
// waveforms are kept instead and latents are recomputed per step.
struct PreparedEntry {
  std::string id;
  std::vector<Matrix> z;
  Matrix s;
  EcogRecording ecog16k;
  Vector speech;
  Matrix x;  // target log-mel, frames x bins, double
};

PreparedEntry prepare_entry(const dataio::ManifestEntry& entry, const ModelBundle& model,
                            bool cache_latents) {
  auto [rec, speech] = dataio::read_recording(entry);
  PreparedEntry p;
  p.id = entry.id;
  p.ecog16k = prepare_ecog(rec);
  require(p.ecog16k.samples.rows() == model.channels,
          "entry '" + entry.id + "' has " + std::to_string(p.ecog16k.samples.rows()) +
              " channels, corpus uses " + std::to_string(model.channels));
  p.x = dsp::mel_spectrogram(speech, model.config.mel_bins).values.cast<double>();
  if (cache_latents) {
    CoarseBrainRepresentation z = extract_ecog(p.ecog16k, *model.extractor);
    FeatureSequence s =
        extract_speech_latent(speech, *model.extractor, z.channels.front().rows());
    align_frames(z, s);
    p.z = std::move(z.channels);
    p.s = std::move(s.values);
    p.ecog16k = EcogRecording{};  // waveforms no longer needed
  } else {
    p.speech = speech.samples;
  }
  return p;
}

struct StepLosses {
  double mel = 0.0;
  double lf = 0.0;
};

StepLosses train_step(ModelBundle& model, const PreparedEntry& entry, AdamOptimizer& adam,
                      double lr) {
  const bool trainable_extractor = model.extractor_trainable();
  ad::Tape tape;
  nn::TapeBinding enc_bind(tape, model.encoder->params(), true);
  nn::TapeBinding mel_bind(tape, model.melgen->params(), true);
  std::unique_ptr<nn::TapeBinding> ext_bind;
  if (trainable_extractor)
    ext_bind = std::make_unique<nn::TapeBinding>(tape, model.scratch->params(), true);

  std::vector<ad::Var> z_vars;
  Matrix s_value;
  if (!trainable_extractor) {
    z_vars.reserve(entry.z.size());
    for (const Matrix& zc : entry.z) z_vars.push_back(tape.constant(zc));
    s_value = entry.s;
  } else {
    for (Index ch = 0; ch < entry.ecog16k.samples.rows(); ++ch) {
      ad::Var wave = tape.constant(entry.ecog16k.samples.row(ch).transpose());
      z_vars.push_back(model.scratch->forward(*ext_bind, wave));
    }
    // S comes from the same extractor at current weights, gradients blocked.
    SpeechWaveform sw{entry.speech, 16000.0};
    FeatureSequence s = extract_speech_latent(sw, *model.scratch,
                                              tape.value(z_vars.front()).rows());
    s_value = s.values;
    require(s_value.rows() == tape.value(z_vars.front()).rows(),
            "entry '" + entry.id + "': speech latents shorter than ECoG latents");
  }

  ad::Var c = model.encoder->forward(enc_bind, z_vars);
  ad::Var x_hat = model.melgen->generate(mel_bind, c, entry.x.rows());
  ad::Var l_mel = tape.l2_norm(tape.sub(x_hat, tape.constant(entry.x)));

  StepLosses losses;
  losses.mel = tape.value(l_mel)(0, 0);
  ad::Var l_tot = tape.scale(l_mel, model.config.lambda_mel);
  if (model.config.use_lf) {
    ad::Var l_lf = tape.l2_norm(tape.sub(c, tape.constant(s_value)));
    losses.lf = tape.value(l_lf)(0, 0);
    l_tot = tape.add(l_tot, tape.scale(l_lf, model.config.lambda_lf));
  }
  tape.backward(l_tot);

  std::vector<std::pair<nn::ParamStore*, const nn::TapeBinding*>> groups = {
      {&model.encoder->params(), &enc_bind}, {&model.melgen->params(), &mel_bind}};
  if (trainable_extractor) groups.emplace_back(&model.scratch->params(), ext_bind.get());
  adam.step(lr, groups);
  return losses;
}

double validation_mel_loss(const ModelBundle& model, const std::vector<PreparedEntry>& val) {
  if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const PreparedEntry& entry : val) {
    FeatureSequence c;
    if (!entry.z.empty()) {
      CoarseBrainRepresentation z;
      z.channels = entry.z;
      c = model.encoder->encode(z);
    } else {
      CoarseBrainRepresentation z = extract_ecog(entry.ecog16k, *model.extractor);
      c = model.encoder->encode(z);
    }
    MelSpectrogram pred = model.melgen->generate_mel(c, entry.x.rows());
    sum += (pred.values.cast<double>() - entry.x).norm();
  }
  return sum / double(val.size());
}

}  // namespace

TrainResult train(const dataio::CorpusSplit& split, const TrainConfig& config,
                  const TrainOptions& options) {
  validate(config);
  require(!split.train.empty(), "empty train split");
  require(!config.paths.out_dir.empty(), "config.paths.out_dir is empty");
  std::filesystem::create_directories(config.paths.out_dir);
  const std::string last_path = config.paths.out_dir + "/last.ckpt";
  const std::string best_path = config.paths.out_dir + "/best.ckpt";
  const std::string history_path = config.paths.out_dir + "/history.csv";

  ModelBundle model;
  AdamOptimizer adam;
  int start_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  const bool resuming = !options.resume_from.empty();
  if (resuming) {
    require(std::filesystem::exists(options.resume_from),
            "cannot resume: no checkpoint at " + options.resume_from);
    LoadedCheckpoint loaded = load_checkpoint(options.resume_from);
    require(loaded.model.config.mel_bins == config.mel_bins,
            "checkpoint was trained with mel_bins " +
                std::to_string(loaded.model.config.mel_bins) +
                " but the run is configured for " + std::to_string(config.mel_bins));
    require(loaded.model.config.extractor.dim == config.extractor.dim &&
                loaded.model.config.extractor.kind == config.extractor.kind,
            "checkpoint extractor configuration does not match the run");
    model = std::move(loaded.model);
    adam = std::move(loaded.adam);
    start_epoch = loaded.epochs_done;
    best_val = loaded.best_val;
  } else {
    auto [first_rec, first_speech] = dataio::read_recording(split.train.front());
    (void)first_speech;
    model = make_model(config, int(first_rec.samples.rows()));
  }

  const bool cache_latents = !model.extractor_trainable();
  std::vector<PreparedEntry> train_set, val_set;
  train_set.reserve(split.train.size());
  for (const auto& e : split.train) train_set.push_back(prepare_entry(e, model, cache_latents));
  const auto& val_entries = split.seen_test.empty() ? split.train : split.seen_test;
  val_set.reserve(val_entries.size());
  for (const auto& e : val_entries) val_set.push_back(prepare_entry(e, model, cache_latents));

  const std::uint64_t frozen_checksum_before = model.extractor->checksum();

  std::ofstream history;
  if (resuming && std::filesystem::exists(history_path)) {
    history.open(history_path, std::ios::app);
  } else {
    history.open(history_path, std::ios::trunc);
    history << (config.use_lf ? "epoch,lr,L_mel,L_lf,L_tot,val_L_mel"
                              : "epoch,lr,L_mel,L_tot,val_L_mel")
            << "\n";
  }
  require(history.good(), "cannot write " + history_path);

  TrainResult result;
  result.first_val = validation_mel_loss(model, val_set);
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;

  std::string last_good = resuming ? options.resume_from : "";
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffler(derive_seed(config.seed, {hash_label("epoch"), std::uint64_t(epoch)}));
    shuffler.shuffle(order);

    double sum_mel = 0.0, sum_lf = 0.0;
    for (std::size_t idx : order) {
      const StepLosses losses = train_step(model, train_set[idx], adam, lr);
      if (!std::isfinite(losses.mel) || !std::isfinite(losses.lf))
        fail("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
             ", entry '" + train_set[idx].id +
             "'; last good checkpoint: " + (last_good.empty() ? "(none)" : last_good));
      sum_mel += losses.mel;
      sum_lf += losses.lf;
    }
    const double mean_mel = sum_mel / double(train_set.size());
    const double mean_lf = sum_lf / double(train_set.size());
    const double mean_tot = total_loss(mean_mel, mean_lf, config);
    const double val = validation_mel_loss(model, val_set);

    if (!std::isfinite(mean_tot) || (!val_set.empty() && !std::isfinite(val)))
      fail("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
           "; last good checkpoint: " + (last_good.empty() ? "(none)" : last_good));

    history << epoch << ',' << format_g(lr) << ',' << format_g(mean_mel) << ',';
    if (config.use_lf) history << format_g(mean_lf) << ',';
    history << format_g(mean_tot) << ',' << format_g(val) << "\n";
    history.flush();

    const int done = epoch + 1;
    // Update the best before the periodic save so a resumed run inherits the
    // exact best-so-far the straight run had at this point.
    if (val < best_val) {
      best_val = val;
      save_checkpoint(best_path, model, adam, done, best_val);
    }
    if (done % config.checkpoint_interval == 0 || done == config.epochs) {
      save_checkpoint(last_path, model, adam, done, best_val);
      last_good = last_path;
    }
    if (options.progress) options.progress(epoch, lr, mean_mel, mean_lf, val);
  }

  if (start_epoch >= config.epochs && !std::filesystem::exists(last_path))
    save_checkpoint(last_path, model, adam, config.epochs, best_val);
  if (!std::filesystem::exists(best_path)) save_checkpoint(best_path, model, adam,
                                                           config.epochs, best_val);

  if (!model.extractor_trainable())
    require(model.extractor->checksum() == frozen_checksum_before,
            "frozen extractor parameters changed during training");

  result.epochs_done = std::max(start_epoch, config.epochs);
  result.best_val = best_val;
  return result;
}

}  // namespace bt
