// braintalker/training.hpp
//
// Losses, optimizer, training loop, and checkpointing. Training consumes a
// corpus split, steps one utterance at a time in seeded shuffled order, and
// minimizes lambda_mel * |X~ - X|_2 + lambda_lf * |C - S|_2 with Adam under
// a stepped learning-rate schedule. Runs are fully deterministic given the
// seed: per-epoch shuffles are derived from (seed, epoch), so a resumed run
// replays exactly the schedule of an uninterrupted one.

#pragma once

#include "braintalker/dataio.hpp"
#include "braintalker/encoder.hpp"
#include "braintalker/extractor.hpp"
#include "braintalker/melgen.hpp"
#include "braintalker/nn.hpp"
#include "braintalker/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace bt {

struct TrainPaths {
  std::string manifest;  // corpus manifest (JSON lines)
  std::string out_dir;   // checkpoints + history.csv
};

struct TrainConfig {
  double lambda_mel = 1.0;
  double lambda_lf = 1.0;
  double lr0 = 5e-5;
  double lr_decay = 0.9;
  int lr_decay_interval = 100;  // epochs per decay step
  int epochs = 1000;
  int mel_bins = 13;
  bool use_lf = true;
  std::uint64_t seed = 1;
  int checkpoint_interval = 100;
  ExtractorSpec extractor;
  MelGenConfig melgen;  // input_dim and bins are overridden per run
  TrainPaths paths;
};

// JSON round trip for config files; missing keys keep their defaults, and
// invariant violations (negative weights, bad decay, bins) are errors.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);
void validate(const TrainConfig& config);

// --- losses and schedule -----------------------------------------------------

// Euclidean (Frobenius) norm of the element-wise difference.
double mel_loss(const MelSpectrogram& pred, const MelSpectrogram& target);
double latent_feature_loss(const FeatureSequence& c, const FeatureSequence& s);
double total_loss(double l_mel, double l_lf, const TrainConfig& config);
// lr0 * decay^(epoch / interval)
double lr_at(int epoch, const TrainConfig& config);

// --- optimizer -----------------------------------------------------------------

class AdamOptimizer {
 public:
  struct Slot {
    Matrix m, v;
  };

  // One update over the given parameter groups; the tape bindings supply the
  // gradients. Group order must be stable across steps and runs.
  void step(double lr,
            const std::vector<std::pair<nn::ParamStore*, const nn::TapeBinding*>>& groups);

  int step_count() const { return t_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void restore(int t, std::map<std::string, Slot> slots);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  std::map<std::string, Slot> slots_;  // "g<group>.<param>" -> moments
};

// --- model bundle ---------------------------------------------------------------

struct ModelBundle {
  TrainConfig config;
  int channels = 0;
  std::unique_ptr<FeatureExtractor> extractor;
  ScratchExtractor* scratch = nullptr;  // set when the extractor is scratch
  std::unique_ptr<LatentEncoder> encoder;
  std::unique_ptr<MelGenerator> melgen;

  bool extractor_trainable() const { return scratch != nullptr && !config.extractor.frozen; }
};

// Fresh bundle with seeded parameter initialization; channels is the corpus
// channel count (fixes the encoder's merge width).
ModelBundle make_model(const TrainConfig& config, int channels);

// ECoG at its native rate -> predicted mel with exactly target_frames rows.
MelSpectrogram predict_mel(const ModelBundle& model, const EcogRecording& rec,
                           Index target_frames);
// Target-free variant: frame count derived from the recording's duration.
MelSpectrogram synthesize_mel(const ModelBundle& model, const EcogRecording& rec);

// --- checkpointing ----------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelBundle& model,
                     const AdamOptimizer& adam, int epochs_done, double best_val);

struct LoadedCheckpoint {
  ModelBundle model;
  AdamOptimizer adam;
  int epochs_done = 0;
  double best_val = 0.0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// --- training loop -----------------------------------------------------------------

struct TrainOptions {
  std::string resume_from;  // checkpoint path; empty starts a fresh run
  // Called after every epoch: (epoch, lr, mean L_mel, mean L_lf, val L_mel).
  std::function<void(int, double, double, double, double)> progress;
};

struct TrainResult {
  std::string last_checkpoint;
  std::string best_checkpoint;
  int epochs_done = 0;
  double best_val = 0.0;
  double first_val = 0.0;  // validation L_mel before the first update
};

// Trains on split.train, validates on split.seen_test (falling back to the
// train set when empty), writes history.csv and checkpoints under
// config.paths.out_dir, and returns the checkpoint paths. Aborts with the
// last good checkpoint named if the loss turns non-finite.
TrainResult train(const dataio::CorpusSplit& split, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace bt
