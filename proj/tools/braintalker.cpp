// braintalker: one binary, five pipeline stages.
//
//   synthgen  write a synthetic paired ECoG/speech corpus
//   train     fit the encoder + mel generator (optionally the extractor)
//   synth     checkpoint + ECoG recording -> mel exchange file
//   eval      score predicted vs reference mel directories
//   plot      render a mel exchange file as a PNG heatmap
//   mos       aggregate listening-test ratings
//
// Flags override config-file values. Every command exits nonzero with a
// message on stderr for any error.

#include "braintalker/dataio.hpp"
#include "braintalker/dsp.hpp"
#include "braintalker/eval.hpp"
#include "braintalker/plot.hpp"
#include "braintalker/synthdata.hpp"
#include "braintalker/training.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  bt::require(f.good(), "cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int run_synthgen(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t* seed_override) {
  bt::synth::SynthConfig cfg;
  if (!config_path.empty()) cfg = bt::synth::synth_config_from_json(read_text_file(config_path));
  if (seed_override) cfg.seed = *seed_override;
  const std::string manifest = bt::synth::generate_corpus(cfg, out_dir);
  std::cout << manifest << "\n";
  return 0;
}

struct TrainFlags {
  std::string config_path, data, out, resume, extractor;
  bool no_lf = false;
  int mel_bins = 0, epochs = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double lr0 = 0.0;
  std::string unseen_word;
  int heldout_trial = 0;
};

int run_train(const TrainFlags& f) {
  bt::TrainConfig cfg;
  if (!f.config_path.empty()) cfg = bt::train_config_from_json(read_text_file(f.config_path));
  if (f.no_lf) cfg.use_lf = false;
  if (!f.extractor.empty()) {
    if (f.extractor == "scratch") {
      cfg.extractor.kind = bt::ExtractorSpec::Kind::kScratch;
      if (cfg.extractor.dim == 768) cfg.extractor.dim = 512;
    } else if (f.extractor == "pretrained") {
      cfg.extractor.kind = bt::ExtractorSpec::Kind::kPretrained;
      cfg.extractor.dim = 768;
    } else {
      bt::fail("--extractor must be 'scratch' or 'pretrained', got '" + f.extractor + "'");
    }
  }
  if (f.mel_bins != 0) cfg.mel_bins = f.mel_bins;
  if (f.epochs >= 0) cfg.epochs = f.epochs;
  if (f.seed_set) cfg.seed = f.seed;
  if (f.lr0 > 0.0) cfg.lr0 = f.lr0;
  cfg.paths.manifest = f.data;
  cfg.paths.out_dir = f.out;
  bt::validate(cfg);

  const auto entries = bt::dataio::load_manifest(cfg.paths.manifest);
  bt::require(!entries.empty(), "manifest has no entries: " + cfg.paths.manifest);
  std::string unseen = f.unseen_word;
  if (unseen.empty()) unseen = entries.back().word_label;
  const bt::dataio::CorpusSplit split =
      bt::dataio::split_corpus(entries, unseen, f.heldout_trial);

  bt::TrainOptions options;
  options.resume_from = f.resume;
  options.progress = [](int epoch, double lr, double l_mel, double l_lf, double val) {
    std::printf("epoch %d  lr %.3g  L_mel %.6g  L_lf %.6g  val_L_mel %.6g\n", epoch, lr, l_mel,
                l_lf, val);
    std::fflush(stdout);
  };
  const bt::TrainResult result = bt::train(split, cfg, options);
  std::cout << "epochs_done " << result.epochs_done << "\n"
            << "val_L_mel_first " << result.first_val << "\n"
            << "val_L_mel_best " << result.best_val << "\n"
            << "last_checkpoint " << result.last_checkpoint << "\n"
            << "best_checkpoint " << result.best_checkpoint << "\n";
  return 0;
}

int run_synth(const std::string& ckpt, const std::string& input, const std::string& out) {
  bt::LoadedCheckpoint loaded = bt::load_checkpoint(ckpt);
  const bt::EcogRecording rec = bt::dataio::read_ecog(input);
  const bt::MelSpectrogram mel = bt::synthesize_mel(loaded.model, rec);
  bt::dataio::write_mel(mel, out);
  std::cout << out << " (" << mel.frames() << " x " << mel.bins() << ")\n";
  return 0;
}

std::map<std::string, std::string> mel_stems(const std::string& dir) {
  bt::require(fs::is_directory(dir), dir + " is not a directory");
  std::map<std::string, std::string> stems;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    const fs::path p = de.path();
    if (p.extension() == ".melbin") stems[p.stem().string()] = p.string();
  }
  return stems;
}

int run_eval(const std::string& pred_dir, const std::string& ref_dir,
             const std::string& report_path) {
  const auto pred = mel_stems(pred_dir);
  const auto ref = mel_stems(ref_dir);
  std::vector<std::string> only_pred, only_ref;
  for (const auto& [stem, path] : pred)
    if (!ref.count(stem)) only_pred.push_back(stem);
  for (const auto& [stem, path] : ref)
    if (!pred.count(stem)) only_ref.push_back(stem);
  if (!only_pred.empty() || !only_ref.empty()) {
    std::string msg = "unmatched file stems between pred and ref:";
    for (const auto& s : only_pred) msg += " " + s + "(pred-only)";
    for (const auto& s : only_ref) msg += " " + s + "(ref-only)";
    bt::fail(msg);
  }
  bt::require(!pred.empty(), "no .melbin files found in " + pred_dir);

  std::vector<std::tuple<std::string, bt::MelSpectrogram, bt::MelSpectrogram>> pairs;
  pairs.reserve(pred.size());
  for (const auto& [stem, path] : pred)
    pairs.emplace_back(stem, bt::dataio::read_mel(path), bt::dataio::read_mel(ref.at(stem)));
  const bt::eval::MetricReport report = bt::eval::evaluate_pairs(pairs);
  bt::eval::write_report_json(report, report_path);
  const fs::path csv = fs::path(report_path).replace_extension(".csv");
  bt::eval::write_report_csv(report, csv.string());

  for (const auto& [name, ci] : report.summary)
    std::printf("%s %.6g +- %.6g (n=%d)\n", name.c_str(), ci.mean, ci.halfwidth, ci.n);
  std::cout << report_path << "\n" << csv.string() << "\n";
  return 0;
}

int run_plot(const std::string& mel_path, const std::string& png_path) {
  const bt::MelSpectrogram mel = bt::dataio::read_mel(mel_path);
  const bt::plot::Layout layout = bt::plot::render_mel_png(mel, png_path);
  std::cout << png_path << " (" << layout.width << " x " << layout.height << ", heatmap "
            << layout.heat_w << " x " << layout.heat_h << ")\n";
  return 0;
}

int run_mos(const std::string& ratings_csv, const std::string& out_json) {
  const auto rows = bt::eval::load_mos_csv(ratings_csv);
  const bt::eval::MosSummary summary = bt::eval::aggregate_mos(rows);
  bt::eval::write_mos_summary_json(summary, out_json);
  std::printf("overall %.4g +- %.4g (n=%d)\n", summary.overall.mean, summary.overall.halfwidth,
              summary.overall.n);
  std::cout << out_json << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"brain-to-speech pipeline: synthetic corpora, training, synthesis, evaluation"};
  app.require_subcommand(1);

  // synthgen
  auto* synthgen = app.add_subcommand("synthgen", "generate a synthetic paired corpus");
  std::string sg_config, sg_out;
  std::uint64_t sg_seed = 0;
  bool sg_seed_set = false;
  synthgen->add_option("--config", sg_config, "corpus config JSON")->check(CLI::ExistingFile);
  synthgen->add_option("--out", sg_out, "output directory")->required();
  synthgen->add_option("--seed", sg_seed, "override the config seed")
      ->each([&sg_seed_set](const std::string&) { sg_seed_set = true; });

  // train
  auto* train = app.add_subcommand("train", "train encoder + mel generator");
  TrainFlags tf;
  train->add_option("--config", tf.config_path, "training config JSON")->check(CLI::ExistingFile);
  train->add_option("--data", tf.data, "corpus manifest")->required();
  train->add_option("--out", tf.out, "output directory")->required();
  train->add_option("--resume", tf.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_flag("--no-lf", tf.no_lf, "disable the latent feature loss");
  train->add_option("--extractor", tf.extractor, "feature extractor: scratch or pretrained");
  train->add_option("--mel-bins", tf.mel_bins, "13 or 80");
  train->add_option("--epochs", tf.epochs, "override epoch count");
  train->add_option("--seed", tf.seed, "override the config seed")
      ->each([&tf](const std::string&) { tf.seed_set = true; });
  train->add_option("--lr0", tf.lr0, "override the initial learning rate");
  train->add_option("--unseen-word", tf.unseen_word,
                    "word label held out entirely (default: last word in the manifest)");
  train->add_option("--heldout-trial", tf.heldout_trial,
                    "trial index held out from every remaining word");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize a mel from an ECoG recording");
  std::string sy_ckpt, sy_input, sy_out;
  synth->add_option("--ckpt", sy_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  synth->add_option("--input", sy_input, "ECoG recording (.wav or raw+sidecar)")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", sy_out, "output mel exchange file (.melbin)")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score predicted vs reference mel directories");
  std::string ev_pred, ev_ref, ev_report;
  eval_cmd->add_option("--pred", ev_pred, "directory of predicted .melbin files")->required();
  eval_cmd->add_option("--ref", ev_ref, "directory of reference .melbin files")->required();
  eval_cmd->add_option("--report", ev_report, "report JSON path (CSV written alongside)")
      ->required();

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render a mel exchange file as a PNG heatmap");
  std::string pl_mel, pl_png;
  plot_cmd->add_option("--mel", pl_mel, "mel exchange file")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--png", pl_png, "output PNG path")->required();

  // mos
  auto* mos = app.add_subcommand("mos", "aggregate listening-test ratings");
  std::string mo_csv, mo_out;
  mos->add_option("--ratings", mo_csv, "ratings CSV (respondent_id,item_id,split,score)")
      ->required()
      ->check(CLI::ExistingFile);
  mos->add_option("--out", mo_out, "summary JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synthgen->parsed()) return run_synthgen(sg_config, sg_out, sg_seed_set ? &sg_seed : nullptr);
    if (train->parsed()) return run_train(tf);
    if (synth->parsed()) return run_synth(sy_ckpt, sy_input, sy_out);
    if (eval_cmd->parsed()) return run_eval(ev_pred, ev_ref, ev_report);
    if (plot_cmd->parsed()) return run_plot(pl_mel, pl_png);
    if (mos->parsed()) return run_mos(mo_csv, mo_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
