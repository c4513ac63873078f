#include "plmfeat/safetensors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>

#include "common/error.hpp"
#include "common/util.hpp"

namespace b4g::plmfeat {
namespace {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes little-endian");

double half_to_double(std::uint16_t h) {
  const std::uint32_t sign = (h >> 15) & 1u;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  double v;
  if (exp == 0) {
    v = std::ldexp(static_cast<double>(mant), -24);
  } else if (exp == 31) {
    v = mant ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else {
    v = std::ldexp(static_cast<double>(mant | 0x400u), static_cast<int>(exp) - 25);
  }
  return sign ? -v : v;
}

}  // namespace

TensorMap read_safetensors(const std::filesystem::path& path) {
  const std::string blob = read_file(path);
  if (blob.size() < 8) fail(ErrorKind::format, path.string() + ": too short for safetensors");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, blob.data(), 8);
  if (header_len > blob.size() - 8) fail(ErrorKind::format, path.string() + ": header length out of range");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, path.string() + ": bad safetensors header: " + e.what());
  }
  const std::size_t base = 8 + header_len;
  TensorMap out;
  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() == "__metadata__") continue;
    const auto& desc = it.value();
    Tensor t;
    t.shape = desc.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = desc.at("data_offsets").get<std::vector<std::size_t>>();
    const std::string dtype = desc.at("dtype").get<std::string>();
    std::size_t count = 1;
    for (auto d : t.shape) count *= static_cast<std::size_t>(d);
    if (offsets.size() != 2 || offsets[1] < offsets[0] || base + offsets[1] > blob.size())
      fail(ErrorKind::format, path.string() + ": bad data_offsets for " + it.key());
    const char* src = blob.data() + base + offsets[0];
    const std::size_t bytes = offsets[1] - offsets[0];
    t.data.resize(count);
    auto expect = [&](std::size_t width) {
      if (bytes != count * width)
        fail(ErrorKind::format, path.string() + ": size mismatch for " + it.key());
    };
    if (dtype == "F64") {
      expect(8);
      std::memcpy(t.data.data(), src, bytes);
    } else if (dtype == "F32") {
      expect(4);
      for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, src + 4 * i, 4);
        t.data[i] = f;
      }
    } else if (dtype == "F16") {
      expect(2);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t h;
        std::memcpy(&h, src + 2 * i, 2);
        t.data[i] = half_to_double(h);
      }
    } else if (dtype == "BF16") {
      expect(2);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t h;
        std::memcpy(&h, src + 2 * i, 2);
        const std::uint32_t bits = static_cast<std::uint32_t>(h) << 16;
        t.data[i] = std::bit_cast<float>(bits);
      }
    } else if (dtype == "I64") {
      // position_ids buffers in some checkpoints; kept as doubles.
      expect(8);
      for (std::size_t i = 0; i < count; ++i) {
        std::int64_t v;
        std::memcpy(&v, src + 8 * i, 8);
        t.data[i] = static_cast<double>(v);
      }
    } else {
      fail(ErrorKind::format, path.string() + ": unsupported dtype " + dtype + " for " + it.key());
    }
    out.emplace(it.key(), std::move(t));
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors, StoreType type) {
  nlohmann::json header = nlohmann::json::object();
  const std::size_t width = type == StoreType::f64 ? 8 : 4;
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::size_t bytes = t.data.size() * width;
    header[name] = {{"dtype", type == StoreType::f64 ? "F64" : "F32"},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string head = header.dump();
  while ((head.size() + 8) % 8 != 0) head += ' ';
  std::string blob(8, '\0');
  const std::uint64_t len = head.size();
  std::memcpy(blob.data(), &len, 8);
  blob += head;
  blob.reserve(blob.size() + offset);
  for (const auto& [name, t] : tensors) {
    if (type == StoreType::f64) {
      blob.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 8);
    } else {
      for (double d : t.data) {
        const float f = static_cast<float>(d);
        blob.append(reinterpret_cast<const char*>(&f), 4);
      }
    }
  }
  write_file_atomic(path, blob);
}

}  // namespace b4g::plmfeat
