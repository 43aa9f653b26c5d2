#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mixmae/error.hpp"
#include "mixmae/metrics.hpp"

using namespace mixmae;

namespace {

MetricsRow row(std::int64_t step, double loss) {
  MetricsRow r;
  r.step = step;
  r.epoch = step / 10;
  r.loss = loss;
  r.lr = 1e-3 * static_cast<double>(step + 1);
  r.group_loss = {loss / 2, loss / 2};
  r.wall_ms = 12.5;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("header lists one loss column per group") {
  CHECK(metrics_header(3) == "step,epoch,loss,lr,loss_g0,loss_g1,loss_g2,wall_ms");
}

TEST_CASE("writer output parses back to the same rows") {
  const std::string path = "test_metrics_tmp.csv";
  {
    MetricsWriter w(path, 2, false);
    for (int s = 0; s < 5; ++s) w.write(row(s, 3.0 - 0.1 * s));
    CHECK_THROWS_AS(w.write(row(4, 1.0)), Error);
  }
  const auto rows = read_metrics(path);
  REQUIRE(rows.size() == 5);
  CHECK(rows[3].loss == doctest::Approx(2.7).epsilon(1e-9));
  CHECK(rows[3].group_loss.size() == 2);
  CHECK(rows[4].lr == doctest::Approx(5e-3));
  CHECK(slurp(path).rfind(kMetricsVersionLine, 0) == 0);

  truncate_metrics(path, 3);
  CHECK(read_metrics(path).size() == 3);
  {
    MetricsWriter w(path, 2, true);
    w.write(row(3, 9.0));
  }
  const auto resumed = read_metrics(path);
  REQUIRE(resumed.size() == 4);
  CHECK(resumed.back().loss == 9.0);
  std::remove(path.c_str());
}

TEST_CASE("malformed metrics name the line") {
  const std::string head = "step,epoch,loss,lr,loss_g0,wall_ms\n";
  try {
    parse_metrics(head + "0,0,1,1,1,1\n1,0,abc,1,1,1\n", "m.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("m.csv:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_metrics(head + "0,0,1,1\n", "m"), Error);
  CHECK_THROWS_AS(parse_metrics(head + "1,0,1,1,1,1\n1,0,1,1,1,1\n", "m"), Error);
  CHECK_THROWS_AS(parse_metrics("step,loss\n", "m"), Error);
  CHECK_THROWS_AS(parse_metrics("", "m"), Error);
}

TEST_CASE("moving average clips the window at the start") {
  const auto m = moving_average({1, 2, 3, 4, 5}, 2);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 1.5);
  CHECK(m[4] == 4.5);
  const auto w = moving_average({2, 4, 6}, 50);
  CHECK(w[2] == 4.0);
  CHECK_THROWS_AS(moving_average({1.0}, 0), Error);
}

TEST_CASE("thirds cover the series") {
  const auto t = third_means({1, 1, 1, 2, 2, 2, 3, 3, 3});
  CHECK(t == std::vector<double>{1, 2, 3});
  const auto u = third_means({1, 2, 3, 4});
  CHECK(u[0] == 1.0);
  CHECK(u[2] == 3.5);
  CHECK_THROWS_AS(third_means({1, 2}), Error);
}

TEST_CASE("summary trend") {
  std::vector<MetricsRow> down, up, flat;
  for (int s = 0; s < 300; ++s) {
    down.push_back(row(s, 5.0 - 0.01 * s));
    up.push_back(row(s, 1.0 + 0.01 * s));
    flat.push_back(row(s, 2.0));
  }
  const auto d = summarize(down);
  CHECK(d.trend == "decreasing");
  CHECK(d.rows == 300);
  CHECK(d.first_loss == 5.0);
  CHECK(d.min_loss == doctest::Approx(2.01));
  CHECK(d.mean_wall_ms == 12.5);
  CHECK(summarize(up).trend == "increasing");
  CHECK(summarize(flat).trend == "flat");
  CHECK(format_summary(d).find("decreasing") != std::string::npos);
  CHECK_THROWS_AS(summarize({}), Error);
}
