#include "mixmae/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "mixmae/error.hpp"

namespace mixmae {

std::string metrics_header(int groups) {
  std::string h = "step,epoch,loss,lr";
  for (int k = 0; k < groups; ++k) h += ",loss_g" + std::to_string(k);
  return h + ",wall_ms";
}

std::string format_row(const MetricsRow& row) {
  char buf[64];
  std::string s = std::to_string(row.step) + "," + std::to_string(row.epoch);
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    s += buf;
  };
  put(row.loss);
  put(row.lr);
  for (double g : row.group_loss) put(g);
  std::snprintf(buf, sizeof buf, ",%.3f", row.wall_ms);
  return s + buf;
}

MetricsWriter::MetricsWriter(const std::string& path, int groups, bool append) : groups_(groups) {
  std::ifstream probe(path);
  const bool exists = probe.good() && probe.peek() != std::ifstream::traits_type::eof();
  probe.close();
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) fail(ErrorKind::kIo, "cannot write metrics file " + path);
  if (!append || !exists) out_ << kMetricsVersionLine << "\n" << metrics_header(groups) << "\n";
  out_.flush();
}

void MetricsWriter::write(const MetricsRow& row) {
  if (static_cast<int>(row.group_loss.size()) != groups_)
    fail(ErrorKind::kInternal, "metrics row has the wrong number of group losses");
  if (row.step <= last_step_) fail(ErrorKind::kInternal, "metrics steps must increase");
  last_step_ = row.step;
  out_ << format_row(row) << "\n";
  out_.flush();
}

std::vector<MetricsRow> parse_metrics(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<std::string> columns;
  std::vector<MetricsRow> rows;
  auto error = [&](const std::string& msg) {
    fail(ErrorKind::kParse, origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (columns.empty()) {
      columns = cells;
      if (columns.size() < 5 || columns[0] != "step" || columns[1] != "epoch" ||
          columns[2] != "loss" || columns[3] != "lr" || columns.back() != "wall_ms")
        error("header must be step,epoch,loss,lr,loss_g*,wall_ms");
      for (std::size_t i = 4; i + 1 < columns.size(); ++i)
        if (columns[i] != "loss_g" + std::to_string(i - 4))
          error("unexpected column '" + columns[i] + "'");
      continue;
    }
    if (cells.size() != columns.size())
      error("expected " + std::to_string(columns.size()) + " fields, got " +
            std::to_string(cells.size()));
    std::vector<double> v(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        v[i] = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        error("field '" + columns[i] + "' is not a number: '" + cells[i] + "'");
      }
    }
    MetricsRow r;
    r.step = static_cast<std::int64_t>(v[0]);
    r.epoch = static_cast<std::int64_t>(v[1]);
    r.loss = v[2];
    r.lr = v[3];
    r.group_loss.assign(v.begin() + 4, v.end() - 1);
    r.wall_ms = v.back();
    if (!rows.empty() && r.step <= rows.back().step) error("steps must strictly increase");
    rows.push_back(std::move(r));
  }
  if (columns.empty()) fail(ErrorKind::kParse, origin + ": no header line");
  return rows;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open metrics file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics(ss.str(), path);
}

void truncate_metrics(const std::string& path, std::int64_t step) {
  std::ifstream in(path);
  if (!in) return;
  std::string line, kept;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || !header_seen) {
      if (!line.empty() && line[0] != '#') header_seen = true;
      kept += line + "\n";
      continue;
    }
    const auto comma = line.find(',');
    std::int64_t s = 0;
    try {
      s = std::stoll(line.substr(0, comma));
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, path + ": malformed row while truncating");
    }
    if (s < step) kept += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot rewrite metrics file " + path);
  out << kept;
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  if (window < 1) fail(ErrorKind::kParameter, "moving average window must be positive");
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= static_cast<std::size_t>(window)) acc -= values[i - window];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

std::vector<double> third_means(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 3) fail(ErrorKind::kParameter, "need at least three values to split into thirds");
  std::vector<double> out;
  for (int t = 0; t < 3; ++t) {
    const std::size_t lo = n * t / 3, hi = n * (t + 1) / 3;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += values[i];
    out.push_back(s / static_cast<double>(hi - lo));
  }
  return out;
}

MetricsSummary summarize(const std::vector<MetricsRow>& rows, int window) {
  if (rows.empty()) fail(ErrorKind::kParse, "metrics file has no rows");
  MetricsSummary s;
  s.rows = static_cast<std::int64_t>(rows.size());
  s.first_step = rows.front().step;
  s.last_step = rows.back().step;
  s.first_loss = rows.front().loss;
  s.last_loss = rows.back().loss;
  s.min_loss = rows.front().loss;
  s.min_lr = s.max_lr = rows.front().lr;
  std::vector<double> losses;
  double wall = 0.0;
  for (const auto& r : rows) {
    s.min_loss = std::min(s.min_loss, r.loss);
    s.min_lr = std::min(s.min_lr, r.lr);
    s.max_lr = std::max(s.max_lr, r.lr);
    s.mean_loss += r.loss;
    wall += r.wall_ms;
    losses.push_back(r.loss);
  }
  s.mean_loss /= static_cast<double>(rows.size());
  s.mean_wall_ms = wall / static_cast<double>(rows.size());
  s.trend = "flat";
  if (losses.size() >= 3) {
    const auto t = third_means(moving_average(losses, window));
    if (t[0] > t[1] && t[1] > t[2]) s.trend = "decreasing";
    else if (t[0] < t[1] && t[1] < t[2]) s.trend = "increasing";
  } else if (losses.size() == 2 && losses[1] != losses[0]) {
    s.trend = losses[1] < losses[0] ? "decreasing" : "increasing";
  }
  return s;
}

std::string format_summary(const MetricsSummary& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "rows        %lld (steps %lld..%lld)\n"
                "loss        first %.6g  last %.6g  min %.6g  mean %.6g\n"
                "lr          min %.6g  max %.6g\n"
                "wall        %.3f ms/step\n"
                "trend       %s\n",
                static_cast<long long>(s.rows), static_cast<long long>(s.first_step),
                static_cast<long long>(s.last_step), s.first_loss, s.last_loss, s.min_loss,
                s.mean_loss, s.min_lr, s.max_lr, s.mean_wall_ms, s.trend.c_str());
  return buf;
}

}  // namespace mixmae
