#pragma once

// Per-step training metrics as CSV, and summaries of such files.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace mixmae {

constexpr const char* kMetricsVersionLine = "# mixmae metrics v1";

struct MetricsRow {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double loss = 0;
  double lr = 0;
  std::vector<double> group_loss;  // loss_g0 .. loss_g{K-1}
  double wall_ms = 0;
};

std::string metrics_header(int groups);
std::string format_row(const MetricsRow& row);

// Appends rows; opening with `append` keeps earlier rows from a resumed run.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, int groups, bool append);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
  int groups_;
  std::int64_t last_step_ = -1;
};

// Throws a parse error naming the line on malformed input.
std::vector<MetricsRow> read_metrics(const std::string& path);
std::vector<MetricsRow> parse_metrics(const std::string& text, const std::string& origin);
// Drops rows with step >= `step`, rewriting the file; used when resuming.
void truncate_metrics(const std::string& path, std::int64_t step);

// Trailing moving average with the window clipped at the start.
std::vector<double> moving_average(const std::vector<double>& values, int window);
// Means of the three consecutive thirds of a series.
std::vector<double> third_means(const std::vector<double>& values);

struct MetricsSummary {
  std::int64_t rows = 0;
  std::int64_t first_step = 0, last_step = 0;
  double first_loss = 0, last_loss = 0, min_loss = 0, mean_loss = 0;
  double min_lr = 0, max_lr = 0;
  double mean_wall_ms = 0;
  std::string trend;  // decreasing | increasing | flat
};

MetricsSummary summarize(const std::vector<MetricsRow>& rows, int window = 50);
std::string format_summary(const MetricsSummary& s);

}  // namespace mixmae
