#include <bit>
#include <cstring>
#include <fstream>

#include "mosaic/common.hpp"
#include "mosaic/model.hpp"

namespace mosaic {
namespace {

constexpr char kMagic[8] = {'M', 'O', 'S', 'A', 'I', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const MosaicModel& model, const std::filesystem::path& path, const nlohmann::json& provenance) {
  nlohmann::json arrays = nlohmann::json::array();
  std::vector<torch::Tensor> data;
  std::uint64_t offset = 0;
  for (const auto& item : model->named_parameters(true)) {
    auto t = item.value().detach().to(torch::kCPU, torch::kFloat32).contiguous();
    arrays.push_back({{"name", item.key()}, {"shape", t.sizes().vec()}, {"offset", offset}, {"count", t.numel()}});
    offset += static_cast<std::uint64_t>(t.numel());
    data.push_back(t);
  }
  nlohmann::json manifest = {{"format", "mosaic-checkpoint"},
                             {"version", 1},
                             {"config", model->cfg.to_json()},
                             {"stage", model->stage},
                             {"dense_stage2", model->dense_stage2},
                             {"stats", model->stats.empty() ? nlohmann::json(nullptr) : model->stats.to_json()},
                             {"provenance", provenance.is_null() ? nlohmann::json::object() : provenance},
                             {"arrays", arrays}};
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("checkpoint: cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : data)
      out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw RuntimeFailure("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MosaicModel load_checkpoint(const std::filesystem::path& path, nlohmann::json* provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("checkpoint: bad magic in " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ull << 30)) throw DataError("checkpoint: bad manifest length in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("checkpoint: truncated manifest in " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: manifest is not JSON: ") + e.what());
  }

  MosaicModel model(ModelConfig::from_json(manifest.at("config")));
  model->stage = manifest.value("stage", 0);
  model->dense_stage2 = manifest.value("dense_stage2", false);
  model->stats = LatentStats::from_json(manifest.value("stats", nlohmann::json(nullptr)));
  if (provenance) *provenance = manifest.value("provenance", nlohmann::json::object());

  auto params = model->named_parameters(true);
  const auto base = in.tellg();
  std::size_t seen = 0;
  torch::NoGradGuard ng;
  for (const auto& a : manifest.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    auto* p = params.find(name);
    if (!p) throw DataError("checkpoint: unknown parameter '" + name + "'");
    const auto shape = a.at("shape").get<std::vector<int64_t>>();
    if (p->sizes().vec() != shape) throw DataError("checkpoint: shape mismatch for '" + name + "'");
    const auto count = a.at("count").get<std::int64_t>();
    auto buf = torch::empty(shape, torch::kFloat32);
    if (buf.numel() != count) throw DataError("checkpoint: count mismatch for '" + name + "'");
    in.seekg(base + static_cast<std::streamoff>(a.at("offset").get<std::uint64_t>() * sizeof(float)));
    in.read(reinterpret_cast<char*>(buf.data_ptr<float>()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw DataError("checkpoint: truncated data for '" + name + "'");
    p->copy_(buf);
    ++seen;
  }
  if (seen != params.size()) throw DataError("checkpoint: " + std::to_string(params.size() - seen) + " parameters missing");
  return model;
}

bool parameters_identical(const MosaicModel& a, const MosaicModel& b, const std::string& prefix) {
  auto pa = a->named_parameters(true);
  auto pb = b->named_parameters(true);
  std::size_t compared = 0;
  for (const auto& item : pa) {
    if (item.key().rfind(prefix, 0) != 0) continue;
    auto* other = pb.find(item.key());
    if (!other || other->sizes() != item.value().sizes() || other->dtype() != item.value().dtype()) return false;
    auto x = item.value().contiguous();
    auto y = other->contiguous();
    if (std::memcmp(x.data_ptr(), y.data_ptr(), static_cast<std::size_t>(x.numel()) * x.element_size()) != 0) return false;
    ++compared;
  }
  return compared > 0;
}

}  // namespace mosaic
