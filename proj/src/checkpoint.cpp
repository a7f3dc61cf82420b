#include <fstream>
#include <json.hpp>

#include "mas3/error.hpp"
#include "mas3/segmodel.hpp"
#include "mas3/tensor_io.hpp"

namespace mas3 {
namespace {

using json = nlohmann::json;

struct NamedLayer {
  const char* name;
  AffineLayer SegNetwork::*layer;
};

constexpr NamedLayer kLayers[] = {{"encoder", &SegNetwork::encoder},
                                  {"decoder_hidden", &SegNetwork::decoder_hidden},
                                  {"decoder_out", &SegNetwork::decoder_out},
                                  {"classifier", &SegNetwork::classifier}};

json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InvalidInput("missing model checkpoint: " + (dir / "manifest.json").string());
  try {
    json m = json::parse(in);
    if (m.value("kind", "") != "mas3-network") {
      throw CorruptFile(dir.string() + " is not a network checkpoint");
    }
    return m;
  } catch (const json::exception& e) {
    throw CorruptFile("unreadable checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace

void save_network(const std::filesystem::path& dir, const SegNetwork& net,
                  const std::string& metrics_json) {
  std::filesystem::create_directories(dir);
  const Architecture& a = net.arch;
  const json manifest = {{"schema", 1},
                         {"kind", "mas3-network"},
                         {"architecture",
                          {{"width", a.width},
                           {"height", a.height},
                           {"channels", a.channels},
                           {"patch_radius", a.patch_radius},
                           {"encoder_width", a.encoder_width},
                           {"decoder_width", a.decoder_width},
                           {"embedding_dim", a.embedding_dim},
                           {"num_classes", a.num_classes}}},
                         {"metrics", json::parse(metrics_json)}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  for (const auto& l : kLayers) {
    save_tensor(dir / (std::string(l.name) + "_weight.tnsr"), (net.*l.layer).weight);
    save_tensor(dir / (std::string(l.name) + "_bias.tnsr"), (net.*l.layer).bias);
  }
}

SegNetwork load_network(const std::filesystem::path& dir) {
  const json m = read_manifest(dir);
  SegNetwork net;
  try {
    const json& a = m.at("architecture");
    net.arch.width = a.at("width").get<std::size_t>();
    net.arch.height = a.at("height").get<std::size_t>();
    net.arch.channels = a.at("channels").get<std::size_t>();
    net.arch.patch_radius = a.at("patch_radius").get<std::size_t>();
    net.arch.encoder_width = a.at("encoder_width").get<std::size_t>();
    net.arch.decoder_width = a.at("decoder_width").get<std::size_t>();
    net.arch.embedding_dim = a.at("embedding_dim").get<std::size_t>();
    net.arch.num_classes = a.at("num_classes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw CorruptFile("malformed architecture in " + dir.string() + ": " + e.what());
  }
  net.arch.validate();
  const SegNetwork shape = SegNetwork::initialize(net.arch, 0);
  for (const auto& l : kLayers) {
    AffineLayer& layer = net.*l.layer;
    layer.weight = load_tensor(dir / (std::string(l.name) + "_weight.tnsr"));
    layer.bias = load_tensor(dir / (std::string(l.name) + "_bias.tnsr"));
    if (layer.weight.shape() != (shape.*l.layer).weight.shape() ||
        layer.bias.shape() != (shape.*l.layer).bias.shape()) {
      throw CorruptFile(std::string(l.name) + " parameters in " + dir.string() +
                        " do not match the architecture");
    }
  }
  return net;
}

std::string load_network_metrics(const std::filesystem::path& dir) {
  return read_manifest(dir).value("metrics", json::object()).dump();
}

}  // namespace mas3
