#include "rsfiqa/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "rsfiqa/error.hpp"

namespace rsfiqa {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) {
    fail(ErrorCode::LengthMismatch, std::string(what) + ": lengths " + std::to_string(y.size()) + " and " +
                                        std::to_string(yhat.size()));
  }
  if (y.size() < 2) fail(ErrorCode::DegenerateVariance, std::string(what) + ": need at least two samples");
}

double pearson(std::span<const double> x, std::span<const double> y, const char* what) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::DegenerateVariance, std::string(what) + ": constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace

double plcc(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "plcc");
  return pearson(y, yhat, "plcc");
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "srcc");
  const auto ry = average_ranks(y), rh = average_ranks(yhat);
  return pearson(ry, rh, "srcc");
}

MetricReport compute_report(std::span<const double> y, std::span<const double> yhat, std::string split) {
  return {plcc(y, yhat), srcc(y, yhat), y.size(), std::move(split)};
}

SeedSummary summarize(std::vector<MetricReport> runs) {
  SeedSummary s;
  s.runs = std::move(runs);
  if (s.runs.empty()) return s;
  const double n = static_cast<double>(s.runs.size());
  for (const auto& r : s.runs) {
    s.plcc_mean += r.plcc;
    s.srcc_mean += r.srcc;
  }
  s.plcc_mean /= n;
  s.srcc_mean /= n;
  if (s.runs.size() > 1) {
    for (const auto& r : s.runs) {
      s.plcc_std += (r.plcc - s.plcc_mean) * (r.plcc - s.plcc_mean);
      s.srcc_std += (r.srcc - s.srcc_mean) * (r.srcc - s.srcc_mean);
    }
    s.plcc_std = std::sqrt(s.plcc_std / (n - 1.0));
    s.srcc_std = std::sqrt(s.srcc_std / (n - 1.0));
  }
  return s;
}

std::vector<std::pair<std::string, double>> read_id_value_csv(const std::filesystem::path& path,
                                                              const std::string& value_column) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::MalformedCsv, path.string() + ":1: missing header");
  // Dataset CSVs (image_path,mos) double as label files.
  const std::string expected = "image_id," + value_column;
  if (trim(line) != expected && trim(line) != "image_path," + value_column) {
    fail(ErrorCode::MalformedCsv, path.string() + ":1: expected header '" + expected + "'");
  }
  std::vector<std::pair<std::string, double>> rows;
  std::map<std::string, std::size_t> seen;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.rfind(',');
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (comma == std::string_view::npos) fail(ErrorCode::MalformedCsv, where + "expected two columns");
    const std::string id(trim(row.substr(0, comma)));
    const std::string_view num = trim(row.substr(comma + 1));
    double v = 0.0;
    auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (id.empty() || ec != std::errc() || end != num.data() + num.size() || !std::isfinite(v)) {
      fail(ErrorCode::MalformedCsv, where + "bad row '" + std::string(row) + "'");
    }
    if (!seen.emplace(id, line_no).second) fail(ErrorCode::MalformedCsv, where + "duplicate id " + id);
    rows.emplace_back(id, v);
  }
  return rows;
}

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const std::pair<std::string, double>> predictions) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "image_id,score\n";
  char buf[64];
  for (const auto& [id, score] : predictions) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, score);
    out << id << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

MetricReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& labels,
                      std::string split) {
  const auto preds = read_id_value_csv(predictions, "score");
  const auto truth = read_id_value_csv(labels, "mos");
  std::map<std::string, double> by_id(truth.begin(), truth.end());
  std::map<std::string, double> pred_ids(preds.begin(), preds.end());
  std::vector<double> y, yhat;
  for (const auto& [id, score] : preds) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorCode::IdMismatch, "prediction for unknown image id " + id);
    y.push_back(it->second);
    yhat.push_back(score);
  }
  for (const auto& [id, mos] : truth) {
    if (!pred_ids.count(id)) fail(ErrorCode::IdMismatch, "no prediction for image id " + id);
  }
  return compute_report(y, yhat, std::move(split));
}

SeedSummary evaluate_seeds(std::span<const std::filesystem::path> predictions, const std::filesystem::path& labels) {
  std::vector<MetricReport> runs;
  for (const auto& p : predictions) runs.push_back(evaluate(p, labels, p.stem().string()));
  return summarize(std::move(runs));
}

}  // namespace rsfiqa
