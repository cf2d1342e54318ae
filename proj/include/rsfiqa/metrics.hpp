#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rsfiqa {

// Pearson linear correlation. LengthMismatch for unequal lengths,
// DegenerateVariance for fewer than two samples or a constant side.
double plcc(std::span<const double> y, std::span<const double> yhat);
// Pearson correlation of average ranks (ties share the mean rank).
double srcc(std::span<const double> y, std::span<const double> yhat);
// 1-based ranks, ties averaged.
std::vector<double> average_ranks(std::span<const double> values);

struct MetricReport {
  double plcc = 0.0;
  double srcc = 0.0;
  std::size_t count = 0;
  std::string split;
};

MetricReport compute_report(std::span<const double> y, std::span<const double> yhat, std::string split = "test");

struct SeedSummary {
  std::vector<MetricReport> runs;
  double plcc_mean = 0.0;
  double plcc_std = 0.0;  // sample standard deviation, 0 for one run
  double srcc_mean = 0.0;
  double srcc_std = 0.0;
};
SeedSummary summarize(std::vector<MetricReport> runs);

// Two-column CSV with header `image_id,<value_column>` (or `image_path,...`).
// MalformedCsv (with the line number) for bad rows or duplicate ids.
std::vector<std::pair<std::string, double>> read_id_value_csv(const std::filesystem::path& path,
                                                              const std::string& value_column);
void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const std::pair<std::string, double>> predictions);

// Joins `image_id,score` predictions with `image_id,mos` labels.
// IdMismatch names the first id present on one side only.
MetricReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& labels,
                      std::string split = "test");
SeedSummary evaluate_seeds(std::span<const std::filesystem::path> predictions, const std::filesystem::path& labels);

}  // namespace rsfiqa
