// braintalker/eval.hpp
//
// Objective metrics between predicted and reference log-mel spectrograms,
// small-sample confidence intervals, and MOS score aggregation.
//
// Conventions (also recorded in every report header):
//   mcd  - orthonormal DCT-II cepstra of the log-mel frames, 0th coefficient
//          excluded, constant 10*sqrt(2)/ln(10), averaged over frames.
//   pcc  - Pearson correlation over the flattened frames x bins matrix,
//          per utterance; summaries average across utterances.

#pragma once

#include "braintalker/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bt::eval {

double rmse(const Matrix& pred, const Matrix& ref);
double mcd(const Matrix& pred, const Matrix& ref);
double pcc(const Matrix& pred, const Matrix& ref);

inline double rmse(const MelSpectrogram& a, const MelSpectrogram& b) {
  return rmse(a.values.cast<double>(), b.values.cast<double>());
}
inline double mcd(const MelSpectrogram& a, const MelSpectrogram& b) {
  return mcd(a.values.cast<double>(), b.values.cast<double>());
}
inline double pcc(const MelSpectrogram& a, const MelSpectrogram& b) {
  return pcc(a.values.cast<double>(), b.values.cast<double>());
}

// Orthonormal DCT-II matrix, n x n; row 0 is the constant basis vector.
Matrix dct_matrix(int n);

// Upper quantile of Student's t distribution, e.g. p = 0.975 for a 95% CI.
double student_t_quantile(double p, double df);

struct ConfidenceInterval {
  double mean = 0.0;
  double halfwidth = 0.0;
  int n = 0;
};

// mean +- t_{0.975, n-1} * s / sqrt(n), with s the sample standard deviation.
ConfidenceInterval confidence_interval(const std::vector<double>& values);

struct UtteranceMetrics {
  std::string id;
  double rmse = 0.0;
  double mcd = 0.0;
  double pcc = 0.0;
};

struct MetricReport {
  std::vector<UtteranceMetrics> per_utterance;
  // metric name -> CI over the per-utterance values; present when n >= 2.
  std::map<std::string, ConfidenceInterval> summary;
};

MetricReport evaluate_pairs(
    const std::vector<std::tuple<std::string, MelSpectrogram, MelSpectrogram>>& pairs);

void write_report_json(const MetricReport& report, const std::string& path);
void write_report_csv(const MetricReport& report, const std::string& path);

// --- MOS aggregation ---------------------------------------------------

struct MosRow {
  std::string respondent_id;
  std::string item_id;
  std::string split;  // e.g. "seen" / "unseen"
  int score = 0;      // 1..5
};

struct MosSummary {
  ConfidenceInterval overall;
  std::map<std::string, ConfidenceInterval> per_split;
};

MosSummary aggregate_mos(const std::vector<MosRow>& rows);

// CSV with header: respondent_id,item_id,split,score
std::vector<MosRow> load_mos_csv(const std::string& path);
void write_mos_summary_json(const MosSummary& summary, const std::string& path);

}  // namespace bt::eval
