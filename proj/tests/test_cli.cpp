#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "usb/data.hpp"
#include "usb/training.hpp"

using namespace usb;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "usb");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("usb_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small 2-D dataset: a drifting cluster that grows.
fs::path small_dataset(const fs::path& dir, std::size_t snapshots = 3, std::size_t dim = 2) {
  TimeSeriesDataset ds;
  Rng rng(3);
  for (std::size_t k = 0; k < snapshots; ++k) {
    Snapshot s;
    s.time = 2.0 * static_cast<double>(k);
    const std::size_t n = 20 + 5 * k;
    s.points = Matrix(n, dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < dim; ++c) s.points(i, c) = 0.2 * rng.normal() + (c == 0 ? 0.5 * k : 0.0);
    s.weights.assign(n, 1.0);
    ds.snapshots.push_back(s);
  }
  fs::create_directories(dir);
  const fs::path p = dir / "small.csv";
  save_snapshots(ds, p);
  return p;
}

std::vector<std::string> quick_train(const fs::path& data, const fs::path& out) {
  return {"train", "--data", data.string(), "--out", out.string(), "--epochs", "20",
          "--width", "8", "--depth", "2", "--batch", "16", "--nu", "0.1"};
}

}  // namespace

TEST_CASE("gen-data writes the sim-gene and gaussian datasets") {
  const auto dir = scratch("gen");
  auto r = invoke({"gen-data", "--generator", "sim-gene", "--seed", "7", "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  const auto ds = load_snapshots(dir / "a" / "data.csv");
  CHECK(ds.snapshots.size() == 5);

  r = invoke({"gen-data", "--generator", "sim-gene", "--seed", "7", "--out", (dir / "b").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "a" / "data.csv") == slurp(dir / "b" / "data.csv"));

  r = invoke({"gen-data", "--generator", "gaussian", "--dim", "10", "--out", (dir / "g").string()});
  REQUIRE(r.code == 0);
  const auto g = load_snapshots(dir / "g" / "data.csv");
  REQUIRE(g.snapshots.size() == 2);
  CHECK(g.dim() == 10);
  CHECK(g.snapshots[0].size() == 500);
  CHECK(g.snapshots[1].size() == 1400);

  CHECK(invoke({"gen-data", "--generator", "nope", "--out", dir.string()}).code == 2);
}

TEST_CASE("config files are schema checked") {
  const auto dir = scratch("config");
  const auto data = small_dataset(dir);
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "c.json") << text;
    return (dir / "c.json").string();
  };
  CHECK(invoke({"--config", write(R"({"train": {"epochz": 3}})"), "train", "--data", data.string()}).code == 2);
  CHECK(invoke({"--config", write(R"({"bogus": {}})"), "train", "--data", data.string()}).code == 2);
  CHECK(invoke({"--config", write(R"({"train": {"epochs": "many"}})"), "train", "--data", data.string()}).code == 2);
  CHECK(invoke({"--config", write("{not json"), "train", "--data", data.string()}).code == 2);
  CHECK(invoke({"--config", write(R"({"coupling": {"delta": -1}})"), "train", "--data", data.string()}).code == 2);

  // flags win over the file
  const std::string cfg = write(R"({"seed": 4, "train": {"epochs": 3, "hidden_width": 8, "depth": 2,
    "batch_per_pair": 8}, "output": {"directory": ")" + (dir / "o").string() + R"("}})");
  const auto r = invoke({"--config", cfg, "train", "--data", data.string(), "--epochs", "5"});
  REQUIRE(r.code == 0);
  const auto run = nlohmann::json::parse(slurp(dir / "o" / "run.json"));
  CHECK(run.at("config").at("train").at("epochs") == 5);
  CHECK(run.at("config").at("seed") == 4);
  CHECK(run.at("command") == "train");
  CHECK(run.at("version") == USB_VERSION);
}

TEST_CASE("train validates, is deterministic and reports coupling failure") {
  const auto dir = scratch("train");
  const auto data = small_dataset(dir);
  CHECK(invoke({"train", "--data", data.string(), "--delta", "0", "--out", dir.string()}).code == 2);
  CHECK(invoke({"train", "--data", data.string(), "--delta", "-2", "--out", dir.string()}).code == 2);
  CHECK(invoke({"train", "--data", (dir / "missing.csv").string(), "--out", dir.string()}).code == 4);
  CHECK(invoke({"train", "--data", data.string(), "--threads", "0", "--out", dir.string()}).code == 2);

  auto a = quick_train(data, dir / "a"), b = quick_train(data, dir / "b");
  REQUIRE(invoke(a).code == 0);
  REQUIRE(invoke(b).code == 0);
  CHECK(fs::exists(dir / "a" / "model.json"));
  CHECK(slurp(dir / "a" / "loss.csv") == slurp(dir / "b" / "loss.csv"));
  CHECK(slurp(dir / "a" / "run.json") != slurp(dir / "b" / "run.json"));  // output paths differ

  // tiny iteration cap on a tiny epsilon: the coupling cannot converge
  auto bad = quick_train(data, dir / "c");
  for (const char* s : {"--eps", "1e-4"}) bad.push_back(s);
  std::ofstream(dir / "cap.json") << R"({"coupling": {"max_iter": 2}})";
  bad.insert(bad.begin(), {"--config", (dir / "cap.json").string()});
  const auto r = invoke(bad);
  CHECK(r.code == 3);
  CHECK(r.err.find("did not converge") != std::string::npos);
}

TEST_CASE("equal run.json gives byte-identical csv outputs") {
  const auto dir = scratch("repro");
  const auto data = small_dataset(dir);
  const auto out = dir / "o";
  REQUIRE(invoke(quick_train(data, out)).code == 0);
  const auto run1 = slurp(out / "run.json");
  const auto loss1 = slurp(out / "loss.csv");
  REQUIRE(invoke({"coupling", "--data", data.string(), "--out", out.string()}).code == 0);
  const auto c1 = slurp(out / "coupling.csv");
  REQUIRE(invoke({"coupling", "--data", data.string(), "--out", out.string()}).code == 0);
  CHECK(slurp(out / "coupling.csv") == c1);
  CHECK(c1.rfind("interval,batch,i,j,gamma0,gamma1\n", 0) == 0);
  REQUIRE(invoke(quick_train(data, out)).code == 0);
  CHECK(slurp(out / "run.json") == run1);
  CHECK(slurp(out / "loss.csv") == loss1);
}

TEST_CASE("USB_SEED is the global seed fallback") {
  const auto dir = scratch("env");
  ::setenv("USB_SEED", "11", 1);
  auto r = invoke({"gen-data", "--generator", "gaussian", "--dim", "3", "--out", (dir / "a").string()});
  ::unsetenv("USB_SEED");
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "a" / "run.json")).at("config").at("seed") == 11);
  r = invoke({"gen-data", "--generator", "gaussian", "--dim", "3", "--seed", "11", "--out", (dir / "b").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "a" / "data.csv") == slurp(dir / "b" / "data.csv"));
  ::setenv("USB_SEED", "abc", 1);
  CHECK(invoke({"gen-data", "--out", (dir / "c").string()}).code == 2);
  ::unsetenv("USB_SEED");
}

TEST_CASE("simulate writes clouds, lineages and optional plots") {
  const auto dir = scratch("sim");
  const auto data = small_dataset(dir);
  // freshly initialized model: zero growth head
  Rng rng(1);
  ModelTriple m = ModelTriple::create(2, 8, 2, 0.1, rng);
  m.original_times = {0.0, 2.0, 4.0};
  save_model(m, dir / "zero.json");

  auto r = invoke({"simulate", "--data", data.string(), "--model", (dir / "zero.json").string(),
                "--out", (dir / "c").string(), "--dt", "0.05"});
  REQUIRE(r.code == 0);
  std::istringstream cloud(slurp(dir / "c" / "cloud.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(cloud, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("time", 0) == 0) continue;
    CHECK(line.substr(line.rfind(',') + 1) == "1");
    ++rows;
  }
  CHECK(rows == 2 * 20);
  CHECK_FALSE(fs::exists(dir / "c" / "cloud.svg"));

  r = invoke({"simulate", "--data", data.string(), "--model", (dir / "zero.json").string(), "--out",
           (dir / "b").string(), "--mode", "branching", "--n-roots", "1", "--repeats", "8", "--plot"});
  REQUIRE(r.code == 0);
  for (int k = 0; k < 8; ++k) {
    CHECK(fs::exists(dir / "b" / ("trajectories_" + std::to_string(k) + ".csv")));
    CHECK(fs::exists(dir / "b" / ("events_" + std::to_string(k) + ".jsonl")));
  }
  const auto lin = nlohmann::json::parse(slurp(dir / "b" / "lineage.json"));
  CHECK(lin.at("repeats").size() == 8);
  CHECK(fs::exists(dir / "b" / "lineage.svg"));

  // 1-D data: the plot toggle is ignored
  const auto d1 = small_dataset(dir / "b", 3, 1);
  Rng rng1(2);
  ModelTriple m1 = ModelTriple::create(1, 8, 2, 0.1, rng1);
  m1.original_times = {0.0, 2.0, 4.0};
  save_model(m1, dir / "one.json");
  r = invoke({"simulate", "--data", d1.string(), "--model", (dir / "one.json").string(), "--out",
           (dir / "d").string(), "--plot"});
  REQUIRE(r.code == 0);
  CHECK_FALSE(fs::exists(dir / "d" / "cloud.svg"));
  r = invoke({"simulate", "--data", data.string(), "--model", (dir / "zero.json").string(), "--out",
           (dir / "e").string(), "--plot"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "e" / "cloud.svg"));

  // dimension mismatch and missing model
  CHECK(invoke({"simulate", "--data", d1.string(), "--model", (dir / "zero.json").string(), "--out",
             (dir / "f").string()}).code == 2);
  CHECK(invoke({"simulate", "--data", data.string(), "--model", (dir / "nope.json").string(), "--out",
             (dir / "f").string()}).code == 4);
}

TEST_CASE("evaluate reports per-time metrics and the hold-out protocol") {
  const auto dir = scratch("eval");
  const auto data = small_dataset(dir);
  REQUIRE(invoke(quick_train(data, dir)).code == 0);
  auto r = invoke({"evaluate", "--data", data.string(), "--out", dir.string(), "--dt", "0.05"});
  REQUIRE(r.code == 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(rep.at("per_time").size() == 2);
  CHECK(fs::exists(dir / "report.csv"));

  r = invoke({"evaluate", "--data", data.string(), "--out", dir.string(), "--holdout", "all",
           "--epochs", "5", "--width", "8", "--depth", "2", "--batch", "8", "--dt", "0.05"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "report.json")).at("per_time").size() == 1);

  const auto two = small_dataset(dir / "two", 2);
  CHECK(invoke({"evaluate", "--data", two.string(), "--out", dir.string(), "--holdout", "1"}).code == 2);
  CHECK(invoke({"evaluate", "--data", data.string(), "--out", dir.string(), "--holdout", "x"}).code == 2);
  CHECK(invoke({"evaluate", "--data", data.string(), "--out", (dir / "empty").string()}).code == 4);
}

TEST_CASE("usage errors") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({"simulate", "--mode"}).code == 2);
}
