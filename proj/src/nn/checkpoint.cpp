#include "advbiom/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace advbiom::nn {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'B', 'C', 'K', 'P', 'T'};

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.arrays) {
    header["arrays"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, kCheckpointVersion);
    write_pod<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.arrays) {
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(is);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw std::runtime_error("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);

  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  const auto payload_start = is.tellg();
  for (const auto& entry : header.at("arrays")) {
    Tensor t(entry.at("shape").get<Shape>());
    is.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw std::runtime_error("truncated checkpoint payload");
    ckpt.arrays.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

void export_parameters(const ParameterSet& ps, const std::string& prefix,
                       std::map<std::string, Tensor>& arrays) {
  for (const auto& [name, p] : ps.params()) arrays[prefix + name] = p.value();
  for (const auto& [name, b] : ps.buffers()) arrays[prefix + name] = b;
}

void import_parameters(ParameterSet& ps, const std::string& prefix,
                       const std::map<std::string, Tensor>& arrays) {
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = arrays.find(prefix + name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint lacks " + prefix + name);
    if (it->second.shape() != shape) {
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + name + ": " +
                               to_string(it->second.shape()) + " vs " + to_string(shape));
    }
    return it->second;
  };
  for (auto& [name, p] : ps.params()) p.mutable_value() = fetch(name, p.shape());
  for (auto& [name, b] : ps.buffers()) b = fetch(name, b.shape());
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("corrupt RNG state in checkpoint");
}

}  // namespace advbiom::nn
