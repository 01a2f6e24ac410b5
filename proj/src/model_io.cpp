#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "usb/error.hpp"
#include "usb/training.hpp"

namespace usb {
namespace {

constexpr const char* kFormat = "usb-model";
constexpr int kVersion = 1;

using nlohmann::json;

json net_json(const Mlp& net) {
  const auto& s = net.spec();
  return {{"input_dim", s.input_dim},
          {"hidden_width", s.hidden_width},
          {"depth", s.depth},
          {"output_dim", s.output_dim},
          {"negative_slope", s.negative_slope},
          {"params", net.params()}};
}

Mlp net_from_json(const json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_width = j.at("hidden_width").get<std::size_t>();
  s.depth = j.at("depth").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.negative_slope = j.at("negative_slope").get<double>();
  s.validate();
  auto params = j.at("params").get<std::vector<double>>();
  require(params.size() == s.param_count(), ErrorKind::version,
          "network parameter count " + std::to_string(params.size()) +
              " does not match its shape (" + std::to_string(s.param_count()) + ")");
  return Mlp(s, std::move(params));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string model_to_json(const ModelTriple& model) {
  model.validate();
  json j{{"format", kFormat},
         {"version", kVersion},
         {"library_version", USB_VERSION},
         {"dim", model.dim()},
         {"nu", model.nu},
         {"delta", model.delta},
         {"seed", model.seed},
         {"data_hash", hex64(model.data_hash)},
         {"original_times", model.original_times},
         {"v_net", net_json(model.v_net)},
         {"g_net", net_json(model.g_net)},
         {"s_net", net_json(model.s_net)}};
  return j.dump();
}

ModelTriple model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    require(j.is_object() && j.value("format", "") == kFormat, ErrorKind::format,
            "not a model file");
    const int version = j.at("version").get<int>();
    require(version == kVersion, ErrorKind::version,
            "unsupported model version " + std::to_string(version));
    ModelTriple m;
    m.nu = j.at("nu").get<double>();
    m.delta = j.at("delta").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.data_hash = std::stoull(j.at("data_hash").get<std::string>(), nullptr, 16);
    m.original_times = j.at("original_times").get<std::vector<double>>();
    m.v_net = net_from_json(j.at("v_net"));
    m.g_net = net_from_json(j.at("g_net"));
    m.s_net = net_from_json(j.at("s_net"));
    require(j.at("dim").get<std::size_t>() == m.dim(), ErrorKind::version,
            "model dimension field disagrees with its networks");
    try {
      m.validate();
    } catch (const Error& e) {
      fail(ErrorKind::version, e.what());
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::format, "malformed data hash in model file");
  }
}

void save_model(const ModelTriple& model, const std::filesystem::path& path) {
  const std::string text = model_to_json(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  f << text << '\n';
  if (!f) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

ModelTriple load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open model '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace usb
