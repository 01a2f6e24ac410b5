#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "usb/data.hpp"
#include "usb/error.hpp"
#include "usb/generators.hpp"
#include "usb/rng.hpp"

using namespace usb;

namespace {

TimeSeriesDataset random_dataset(std::uint64_t seed, std::size_t d) {
  Rng rng(seed);
  TimeSeriesDataset ds;
  ds.metadata = {{"source", "unit test"}};
  for (double t : {0.0, 8.0, 16.0}) {
    Snapshot s;
    s.time = t;
    s.points = Matrix(7, d);
    for (std::size_t i = 0; i < 7; ++i) {
      for (std::size_t c = 0; c < d; ++c) s.points(i, c) = rng.normal() * 1e3;
      s.weights.push_back(rng.uniform(0.01, 5.0));
    }
    ds.snapshots.push_back(std::move(s));
  }
  return ds;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("usb_test_" + name);
}

double mean_of_rows(const Matrix& m, std::size_t begin, std::size_t end, std::size_t col) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += m(i, col);
  return s / static_cast<double>(end - begin);
}

}  // namespace

TEST_CASE("csv round trip keeps values to 1e-12") {
  const auto ds = random_dataset(3, 4);
  std::stringstream ss;
  write_snapshots(ss, ds);
  const auto back = read_snapshots(ss);
  REQUIRE(back.snapshots.size() == ds.snapshots.size());
  CHECK(back.metadata == ds.metadata);
  for (std::size_t k = 0; k < ds.snapshots.size(); ++k) {
    const auto& a = ds.snapshots[k];
    const auto& b = back.snapshots[k];
    CHECK(a.time == b.time);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a.weights[i] - b.weights[i]) <= 1e-12 * std::abs(a.weights[i]));
      for (std::size_t c = 0; c < a.dim(); ++c)
        CHECK(std::abs(a.points(i, c) - b.points(i, c)) <= 1e-12 * std::abs(a.points(i, c)));
    }
  }
}

TEST_CASE("csv groups interleaved rows by time") {
  std::istringstream in("time,x0,weight\n1,0.5,1\n0,0.25,2\n1,0.75,1\n");
  const auto ds = read_snapshots(in);
  REQUIRE(ds.snapshots.size() == 2);
  CHECK(ds.snapshots[0].time == 0.0);
  CHECK(ds.snapshots[0].size() == 1);
  CHECK(ds.snapshots[1].size() == 2);
  CHECK(ds.snapshots[1].points(1, 0) == 0.75);
}

TEST_CASE("csv rejects malformed input") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_snapshots(in);
  };
  auto kind_of = [&](const std::string& text) {
    try {
      parse(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::config;  // not thrown
  };
  CHECK(kind_of("time,x0,weight\n0,1,-1\n1,1,1\n") == ErrorKind::format);
  CHECK(kind_of("time,x0,weight\n0,1\n1,1,1\n") == ErrorKind::format);
  CHECK(kind_of("time,x0,weight\n0,abc,1\n1,1,1\n") == ErrorKind::format);
  CHECK(kind_of("time,x0,weight\n0,nan,1\n1,1,1\n") == ErrorKind::format);
  CHECK(kind_of("t,x0,weight\n0,1,1\n") == ErrorKind::format);
  CHECK(kind_of("time,x0,weight\n0,1,1\n") == ErrorKind::format);  // single time
  CHECK(kind_of("") == ErrorKind::format);
}

TEST_CASE("missing file is an io error") {
  try {
    load_snapshots("/nonexistent/dir/file.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("saving an empty dataset fails") {
  CHECK_THROWS_AS(save_snapshots(TimeSeriesDataset{}, temp_path("empty.csv")), Error);
}

TEST_CASE("file round trip and weighted clouds") {
  const auto ds = random_dataset(5, 2);
  const auto path = temp_path("roundtrip.csv");
  save_snapshots(ds, path);
  const auto back = load_snapshots(path);
  CHECK(dataset_hash(back) == dataset_hash(ds));

  const auto cloud = WeightedCloud::from_snapshot(ds.snapshots[1]);
  CHECK(cloud.total_mass() == doctest::Approx(ds.snapshots[1].total_mass()).epsilon(1e-12));
  auto later = WeightedCloud::from_snapshot(ds.snapshots[2]);
  save_weighted_clouds({cloud, later}, path);
  const auto c2 = load_snapshots(path);
  REQUIRE(c2.snapshots.size() == 2);
  CHECK(c2.snapshots[0].total_mass() == doctest::Approx(cloud.total_mass()).epsilon(1e-12));
}

TEST_CASE("internal time maps observation times to 0..K") {
  TimeSeriesDataset ds;
  for (double t : {0.0, 8.0, 16.0, 24.0, 32.0})
    ds.snapshots.push_back(Snapshot::uniform(t, Matrix{{0.0}}));
  for (int k = 0; k < 5; ++k) {
    CHECK(ds.to_internal(8.0 * k) == doctest::Approx(k));
    CHECK(ds.to_original(k) == doctest::Approx(8.0 * k));
  }
  CHECK(ds.to_internal(12.0) == doctest::Approx(1.5));
  CHECK(ds.to_original(2.25) == doctest::Approx(18.0));
}

TEST_CASE("standardizer gives zero mean and unit variance on pooled data") {
  const auto ds = random_dataset(9, 3);
  const auto z = Standardizer::fit(ds);
  std::vector<double> m(3, 0.0), v(3, 0.0);
  double wsum = 0.0;
  for (const auto& s : ds.snapshots) {
    const auto p = z.apply(s.points);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      wsum += s.weights[i];
      for (std::size_t c = 0; c < 3; ++c) {
        m[c] += s.weights[i] * p(i, c);
        v[c] += s.weights[i] * p(i, c) * p(i, c);
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(m[c] / wsum == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
    CHECK(v[c] / wsum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("sim-gene produces five snapshots with a non-decreasing population") {
  const auto ds = gen_sim_gene(SimGeneParams::defaults(), 7);
  REQUIRE(ds.snapshots.size() == 5);
  CHECK(ds.dim() == 2);
  CHECK(ds.snapshots.front().size() == 400);
  for (std::size_t k = 1; k < 5; ++k) CHECK(ds.snapshots[k].size() >= ds.snapshots[k - 1].size());
  CHECK(ds.snapshots.back().size() > ds.snapshots.front().size());

  std::stringstream ss;
  write_snapshots(ss, ds);
  std::set<std::string> times;
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty() && line[0] != '#' && line.rfind("time", 0) != 0)
      times.insert(line.substr(0, line.find(',')));
  CHECK(times.size() == 5);
}

TEST_CASE("sim-gene is deterministic per seed") {
  const auto p = SimGeneParams::defaults();
  CHECK(dataset_hash(gen_sim_gene(p, 11)) == dataset_hash(gen_sim_gene(p, 11)));
  CHECK(dataset_hash(gen_sim_gene(p, 11)) != dataset_hash(gen_sim_gene(p, 12)));
}

TEST_CASE("sim-gene without growth keeps a constant count") {
  auto p = SimGeneParams::defaults();
  p.growth_scale = 0.0;
  const auto ds = gen_sim_gene(p, 1);
  for (const auto& s : ds.snapshots) CHECK(s.size() == 400);
}

TEST_CASE("sim-gene noise-free cells at the steady state stay put") {
  auto p = SimGeneParams::defaults();
  p.noise = {0.0, 0.0, 0.0};
  p.division_noise = 0.0;
  p.growth_scale = 0.0;
  const auto x = p.populations[0].center;
  const auto f = sim_gene_drift(p, x);
  for (double v : f) CHECK(std::abs(v) < 1e-12);
  p.populations = {{x, 10, 0.0}};
  const auto ds = gen_sim_gene(p, 2);
  for (const auto& s : ds.snapshots)
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s.points(i, 0) == doctest::Approx(x[0]).epsilon(1e-9));
      CHECK(s.points(i, 1) == doctest::Approx(x[1]).epsilon(1e-9));
    }
}

TEST_CASE("sim-gene deterministic ODE limit is reproducible across seeds") {
  auto p = SimGeneParams::defaults();
  p.noise = {0.0, 0.0, 0.0};
  p.division_noise = 0.0;
  p.growth_scale = 0.0;
  for (auto& pop : p.populations) pop.spread = 0.0;
  CHECK(dataset_hash(gen_sim_gene(p, 1)) == dataset_hash(gen_sim_gene(p, 2)));
}

TEST_CASE("sim-gene drift matches the hand-written governing equations") {
  SimGeneParams p;
  p.alpha = {0.5, 1.5, 2.0};
  p.gamma = {0.7, 1.1, 0.2};
  p.degradation = {0.1, 0.2, 0.4};
  p.beta = 0.25;
  const double x1 = 0.8, x2 = 1.7, x3 = 0.4;
  const auto f = sim_gene_drift(p, {x1, x2, x3});
  const double e1 = (0.5 * x1 * x1 + 0.25) /
                        (1 + 0.5 * x1 * x1 + 1.1 * x2 * x2 + 0.2 * x3 * x3 + 0.25) -
                    0.1 * x1;
  const double e2 = (1.5 * x2 * x2 + 0.25) /
                        (1 + 0.7 * x1 * x1 + 1.5 * x2 * x2 + 0.2 * x3 * x3 + 0.25) -
                    0.2 * x2;
  const double e3 = 2.0 * x3 * x3 / (1 + 2.0 * x3 * x3) - 0.4 * x3;
  CHECK(f[0] == doctest::Approx(e1).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(e2).epsilon(1e-14));
  CHECK(f[2] == doctest::Approx(e3).epsilon(1e-14));
  CHECK(sim_gene_growth_rate(p, 1.0) == doctest::Approx(1.5));
}

TEST_CASE("sim-gene rejects invalid parameters") {
  auto p = SimGeneParams::defaults();
  p.dt = 0.0;
  CHECK_THROWS_AS(gen_sim_gene(p, 1), Error);
  p = SimGeneParams::defaults();
  p.record_times = {0.0, 8.0, 8.0};
  CHECK_THROWS_AS(gen_sim_gene(p, 1), Error);
}

TEST_CASE("gaussian mixture counts and stationary upper cluster") {
  GaussianMixtureParams p;
  const auto ds = gen_gaussian_mixture(p, 4);
  REQUIRE(ds.snapshots.size() == 2);
  CHECK(ds.dim() == 10);
  CHECK(ds.snapshots[0].size() == 500);
  CHECK(ds.snapshots[1].size() == 1400);
  // upper cluster occupies the first rows of each snapshot
  for (std::size_t c = 0; c < 2; ++c) {
    const double m0 = mean_of_rows(ds.snapshots[0].points, 0, 100, c);
    const double m1 = mean_of_rows(ds.snapshots[1].points, 0, 1000, c);
    const double se = p.stddev * std::sqrt(1.0 / 100 + 1.0 / 1000);
    CHECK(std::abs(m0 - m1) < 4 * se);
  }
  CHECK(dataset_hash(ds) == dataset_hash(gen_gaussian_mixture(p, 4)));
}
