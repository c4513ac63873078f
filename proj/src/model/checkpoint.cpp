#include <cstring>
#include <fstream>

#include "common/error.hpp"
#include "model/model.hpp"

namespace b4g::model {
namespace {

constexpr char kMagic[8] = {'B', '4', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr const char* kEncoderPrefix = "encoder.";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

Checkpoint make_checkpoint(const ModelParams& params, const plmfeat::Transformer* finetuned_encoder,
                           nlohmann::json metadata) {
  Checkpoint ck;
  ck.config = params.config();
  ck.metadata = std::move(metadata);
  ck.tensors = params.snapshot();
  if (finetuned_encoder) {
    for (auto& [name, v] : finetuned_encoder->named_parameters()) ck.tensors.emplace(kEncoderPrefix + name, v.value());
  }
  return ck;
}

// Layout: 8-byte magic, little-endian u64 header length, JSON header, then
// each tensor's doubles in column-major order at the offsets listed.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (auto& [name, m] : checkpoint.tensors) {
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  nlohmann::json header = {{"format", 1},
                           {"model", checkpoint.config.to_json()},
                           {"metadata", checkpoint.metadata},
                           {"tensors", table}};
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, h.size());
  out += h;
  out.reserve(out.size() + offset);
  for (auto& [name, m] : checkpoint.tensors)
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < 16 || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0)
    fail(ErrorKind::format, path.string() + ": not a checkpoint file");
  const std::uint64_t hlen = get_u64(in, 8);
  if (hlen > in.size() - 16) fail(ErrorKind::format, path.string() + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, path.string() + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  const std::size_t base = 16 + hlen;
  try {
    if (header.at("format").get<int>() != 1) fail(ErrorKind::format, path.string() + ": unsupported version");
    ck.config = ModelConfig::from_json(header.at("model"));
    ck.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
      const auto off = t.at("offset").get<std::uint64_t>();
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
      if (rows < 0 || cols < 0 || off > in.size() - base || bytes > in.size() - base - off)
        fail(ErrorKind::format, path.string() + ": tensor data out of range");
      ag::Matrix m(rows, cols);
      std::memcpy(m.data(), in.data() + base + off, bytes);
      ck.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, path.string() + ": bad checkpoint header: " + e.what());
  }
  return ck;
}

ModelParams params_from_checkpoint(const Checkpoint& checkpoint) {
  ModelParams p(checkpoint.config);
  p.restore(checkpoint.tensors);
  return p;
}

bool restore_encoder(const Checkpoint& checkpoint, plmfeat::Transformer& encoder) {
  bool any = false;
  for (auto& [name, m] : checkpoint.tensors) any = any || name.starts_with(kEncoderPrefix);
  if (!any) return false;
  for (auto& [name, var] : encoder.named_parameters()) {
    auto it = checkpoint.tensors.find(kEncoderPrefix + name);
    if (it == checkpoint.tensors.end()) fail(ErrorKind::format, "checkpoint lacks encoder tensor '" + name + "'");
    if (it->second.rows() != var.rows() || it->second.cols() != var.cols())
      fail(ErrorKind::shape, "encoder tensor '" + name + "' has the wrong shape");
    auto v = var;
    v.mutable_value() = it->second;
  }
  return true;
}

}  // namespace b4g::model
