#include "braintalker/eval.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bt::eval {

namespace {

void check_shapes(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(std::string(op) + ": shape mismatch, " + std::to_string(a.rows()) + "x" +
         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
         std::to_string(b.cols()));
}

// Regularized incomplete beta via Lentz's continued fraction.
double betacf(double a, double b, double x) {
  const double eps = 3e-16, fpmin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_front) * betacf(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * betacf(b, a, 1.0 - x) / b;
}

nlohmann::json ci_to_json(const ConfidenceInterval& ci) {
  nlohmann::json j;
  j["mean"] = ci.mean;
  j["n"] = ci.n;
  if (ci.n >= 2)
    j["ci95_halfwidth"] = ci.halfwidth;
  else
    j["ci95_halfwidth"] = nullptr;
  return j;
}

ConfidenceInterval summarize(const std::vector<double>& values) {
  if (values.size() >= 2) return confidence_interval(values);
  ConfidenceInterval ci;
  ci.n = int(values.size());
  ci.mean = values.empty() ? 0.0 : values.front();
  ci.halfwidth = 0.0;
  return ci;
}

}  // namespace

double rmse(const Matrix& pred, const Matrix& ref) {
  check_shapes(pred, ref, "rmse");
  return std::sqrt((pred - ref).squaredNorm() / double(pred.size()));
}

Matrix dct_matrix(int n) {
  Matrix d(n, n);
  for (int k = 0; k < n; ++k) {
    const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      d(k, i) = alpha * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * n));
  }
  return d;
}

double mcd(const Matrix& pred, const Matrix& ref) {
  check_shapes(pred, ref, "mcd");
  const int bins = int(pred.cols());
  require(bins >= 2, "mcd: need at least 2 mel bins");
  const Matrix dct = dct_matrix(bins);
  // DCT is linear, so the cepstral difference is the DCT of the difference.
  const Matrix ceps_diff = (pred - ref) * dct.transpose();
  const double mean_norm = ceps_diff.rightCols(bins - 1).rowwise().norm().mean();
  const double k = 10.0 * std::sqrt(2.0) / std::log(10.0);
  return k * mean_norm;
}

double pcc(const Matrix& pred, const Matrix& ref) {
  check_shapes(pred, ref, "pcc");
  const Index n = pred.size();
  require(n >= 2, "pcc: need at least 2 values");
  const double ma = pred.mean(), mb = ref.mean();
  const Eigen::ArrayXXd da = pred.array() - ma, db = ref.array() - mb;
  const double va = (da * da).sum(), vb = (db * db).sum();
  require(va > 0.0 && vb > 0.0, "pcc: zero-variance input, correlation undefined");
  const double r = (da * db).sum() / std::sqrt(va * vb);
  return std::clamp(r, -1.0, 1.0);
}

double student_t_quantile(double p, double df) {
  require(p > 0.0 && p < 1.0, "student_t_quantile: p must be in (0,1)");
  require(df > 0.0, "student_t_quantile: df must be positive");
  if (p == 0.5) return 0.0;
  const bool upper = p > 0.5;
  const double tail = upper ? 2.0 * (1.0 - p) : 2.0 * p;  // I_x(df/2, 1/2) target
  // I_x is monotone increasing in x; bisect on x = df / (df + t^2).
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (incbeta(df / 2.0, 0.5, mid) < tail)
      lo = mid;
    else
      hi = mid;
  }
  const double x = 0.5 * (lo + hi);
  const double t = std::sqrt(df * (1.0 - x) / x);
  return upper ? t : -t;
}

ConfidenceInterval confidence_interval(const std::vector<double>& values) {
  const int n = int(values.size());
  require(n >= 2, "confidence_interval: need at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double s = std::sqrt(ss / (n - 1));
  ConfidenceInterval ci;
  ci.mean = mean;
  ci.n = n;
  ci.halfwidth = s == 0.0 ? 0.0 : student_t_quantile(0.975, n - 1) * s / std::sqrt(double(n));
  return ci;
}

MetricReport evaluate_pairs(
    const std::vector<std::tuple<std::string, MelSpectrogram, MelSpectrogram>>& pairs) {
  MetricReport report;
  std::vector<double> rmses, mcds, pccs;
  for (const auto& [id, pred, ref] : pairs) {
    UtteranceMetrics m;
    m.id = id;
    m.rmse = rmse(pred, ref);
    m.mcd = mcd(pred, ref);
    m.pcc = pcc(pred, ref);
    rmses.push_back(m.rmse);
    mcds.push_back(m.mcd);
    pccs.push_back(m.pcc);
    report.per_utterance.push_back(m);
  }
  if (!report.per_utterance.empty()) {
    report.summary["rmse"] = summarize(rmses);
    report.summary["mcd"] = summarize(mcds);
    report.summary["pcc"] = summarize(pccs);
  }
  return report;
}

void write_report_json(const MetricReport& report, const std::string& path) {
  nlohmann::json j;
  j["conventions"] = {
      {"mcd", "orthonormal DCT-II cepstra of natural-log mel, 0th coefficient excluded, "
              "constant 10*sqrt(2)/ln(10)"},
      {"pcc", "per utterance over the flattened frames x bins matrix, averaged across "
              "utterances (per-bin averaging intentionally not used)"},
      {"ci", "Student t, 95%"}};
  j["per_utterance"] = nlohmann::json::array();
  for (const auto& m : report.per_utterance)
    j["per_utterance"].push_back(
        {{"id", m.id}, {"rmse", m.rmse}, {"mcd", m.mcd}, {"pcc", m.pcc}});
  j["summary"] = nlohmann::json::object();
  for (const auto& [name, ci] : report.summary) j["summary"][name] = ci_to_json(ci);
  std::ofstream out(path);
  require(out.good(), "write_report_json: cannot open " + path);
  out << j.dump(2) << "\n";
  require(out.good(), "write_report_json: write failed for " + path);
}

void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_report_csv: cannot open " + path);
  out << "id,rmse,mcd,pcc\n";
  out.precision(10);
  for (const auto& m : report.per_utterance)
    out << m.id << "," << m.rmse << "," << m.mcd << "," << m.pcc << "\n";
  auto row = [&](const char* label, auto get) {
    out << label;
    for (const char* name : {"rmse", "mcd", "pcc"}) {
      auto it = report.summary.find(name);
      out << ",";
      if (it != report.summary.end()) out << get(it->second);
    }
    out << "\n";
  };
  if (!report.summary.empty()) {
    row("mean", [](const ConfidenceInterval& ci) { return ci.mean; });
    row("ci95_halfwidth", [](const ConfidenceInterval& ci) { return ci.halfwidth; });
  }
  require(out.good(), "write_report_csv: write failed for " + path);
}

MosSummary aggregate_mos(const std::vector<MosRow>& rows) {
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_split;
  for (const auto& row : rows) {
    if (row.score < 1 || row.score > 5)
      fail("aggregate_mos: score " + std::to_string(row.score) + " out of range 1..5 for item '" +
           row.item_id + "' respondent '" + row.respondent_id + "'");
    all.push_back(double(row.score));
    by_split[row.split].push_back(double(row.score));
  }
  MosSummary summary;
  summary.overall = summarize(all);
  for (const auto& [split, values] : by_split) summary.per_split[split] = summarize(values);
  return summary;
}

std::vector<MosRow> load_mos_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_mos_csv: cannot open " + path);
  std::string line;
  require(bool(std::getline(in, line)), "load_mos_csv: empty file " + path);
  require(line.find("respondent_id") != std::string::npos,
          "load_mos_csv: missing header row in " + path);
  std::vector<MosRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    MosRow row;
    std::string score;
    if (!std::getline(ss, row.respondent_id, ',') || !std::getline(ss, row.item_id, ',') ||
        !std::getline(ss, row.split, ',') || !std::getline(ss, score))
      fail("load_mos_csv: malformed line " + std::to_string(lineno) + " in " + path);
    try {
      row.score = std::stoi(score);
    } catch (const std::exception&) {
      fail("load_mos_csv: non-integer score on line " + std::to_string(lineno) + " in " + path);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_mos_summary_json(const MosSummary& summary, const std::string& path) {
  nlohmann::json j;
  j["overall"] = ci_to_json(summary.overall);
  j["per_split"] = nlohmann::json::object();
  for (const auto& [split, ci] : summary.per_split) j["per_split"][split] = ci_to_json(ci);
  std::ofstream out(path);
  require(out.good(), "write_mos_summary_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace bt::eval
