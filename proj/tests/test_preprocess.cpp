#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lmsc/preprocess.hpp"

using namespace lmsc;

namespace {

double lag1_autocorrelation(const std::vector<double>& x) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    den += (x[k] - mean) * (x[k] - mean);
    if (k + 1 < x.size()) num += (x[k] - mean) * (x[k + 1] - mean);
  }
  return num / den;
}

MeasurementTrace trace_at(std::vector<double> positions) {
  MeasurementTrace t;
  for (std::size_t k = 0; k < positions.size(); ++k) t.amplitudes.push_back(1.0 + 0.01 * static_cast<double>(k));
  t.positions = std::move(positions);
  return t;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lmsc_test_" + name);
}

}  // namespace

TEST(DbToLinear, Values) {
  EXPECT_DOUBLE_EQ(db_to_linear(0.0), 1.0);
  EXPECT_NEAR(db_to_linear(20.0), 10.0, 1e-12);
  EXPECT_NEAR(db_to_linear(-6.0206), 0.5, 1e-4);
}

TEST(ParseTrace, TwoRows) {
  const auto t = parse_trace("position_m,amplitude\n0.0,1.01\n1.0,0.98");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(t.amplitudes[0], 1.01);
  EXPECT_DOUBLE_EQ(t.positions[1], 1.0);
}

TEST(ParseTrace, DecibelHeaderConverts) {
  const auto t = parse_trace("position_m,amplitude_db\r\n0,20\r\n\r\n1,0\r\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_NEAR(t.amplitudes[0], 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(t.amplitudes[1], 1.0);
}

TEST(ParseTrace, BadNumberNamesRow) {
  try {
    parse_trace("position_m,amplitude\n0.0,abc\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(ParseTrace, Rejections) {
  EXPECT_THROW(parse_trace("pos,amp\n0,1\n"), Error);
  EXPECT_THROW(parse_trace(""), Error);
  EXPECT_THROW(parse_trace("position_m,amplitude\n1,1\n0,1\n"), Error);
  EXPECT_THROW(parse_trace("position_m,amplitude\n0,1,2\n"), Error);
  EXPECT_THROW(parse_trace("position_m,amplitude\n0,nan\n"), Error);
}

TEST(TraceFile, RoundTripIsExact) {
  std::mt19937_64 rng(4);
  MeasurementTrace t;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double pos = 0;
  for (int k = 0; k < 500; ++k) {
    pos += u(rng);
    t.positions.push_back(pos);
    t.amplitudes.push_back(u(rng) * 3.0);
  }
  const auto path = temp_file("trace.csv");
  save_trace(t, path.string());
  const auto back = load_trace(path.string());
  EXPECT_EQ(back, t);
  std::filesystem::remove(path);
}

TEST(TraceFile, MissingFileIsIoError) {
  try {
    load_trace("/nonexistent/dir/trace.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(ObservationFile, RoundTrip) {
  const std::vector<double> values{0.1, 1.0 / 3.0, 2.5e-7, 12345.678};
  const auto path = temp_file("obs.csv");
  save_observations(values, path.string());
  EXPECT_EQ(load_observations(path.string()).values, values);
  std::filesystem::remove(path);
  EXPECT_THROW(parse_observations("value\n1\n"), Error);
}

TEST(Downsample, HandTrace) {
  const auto obs = downsample_by_distance(trace_at({0.0, 0.3, 0.9, 1.1, 2.2}), 1.0);
  EXPECT_EQ(obs.positions, (std::vector<double>{0.0, 1.1, 2.2}));
  EXPECT_DOUBLE_EQ(obs.values[1], 1.03);
  EXPECT_EQ(obs.spacing_m, 1.0);
}

TEST(Downsample, SmallSpacingKeepsEverything) {
  const auto t = trace_at({0.0, 0.5, 1.0, 1.6});
  const auto obs = downsample_by_distance(t, 0.4);
  EXPECT_EQ(obs.values, t.amplitudes);
}

TEST(Downsample, SingleRecord) {
  EXPECT_EQ(downsample_by_distance(trace_at({3.0}), 1.0).size(), 1u);
}

TEST(Downsample, Errors) {
  EXPECT_THROW(downsample_by_distance(trace_at({0.0, 1.0}), 0.0), Error);
  EXPECT_THROW(downsample_by_distance(MeasurementTrace{}, 1.0), Error);
}

TEST(Downsample, GapsAndLength) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> step(0.0, 0.7);
  std::vector<double> positions{0.0};
  for (int k = 0; k < 2000; ++k) positions.push_back(positions.back() + step(rng));
  const auto t = trace_at(positions);
  const auto obs = downsample_by_distance(t, 1.0);
  EXPECT_LT(obs.size(), t.size());
  for (std::size_t k = 1; k < obs.size(); ++k) EXPECT_GE(obs.positions[k] - obs.positions[k - 1], 1.0 - 1e-12);
}

TEST(Downsample, ReducesCorrelation) {
  // Rayleigh fading whose in-phase and quadrature parts follow AR(1) processes
  // along a 0.05 m grid.
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n01(0.0, 1.0);
  const double rho = 0.9;
  double x = 0, y = 0;
  MeasurementTrace t;
  for (int k = 0; k < 200000; ++k) {
    x = rho * x + std::sqrt(1 - rho * rho) * n01(rng);
    y = rho * y + std::sqrt(1 - rho * rho) * n01(rng);
    t.positions.push_back(0.05 * k);
    t.amplitudes.push_back(std::hypot(x, y));
  }
  const auto obs = downsample_by_distance(t, 1.0);
  EXPECT_LT(lag1_autocorrelation(obs.values), lag1_autocorrelation(t.amplitudes));
  EXPECT_LT(std::abs(lag1_autocorrelation(obs.values)), 0.1);
}
