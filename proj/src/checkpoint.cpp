#include "dgsr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace dgsr {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'S', 'R', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return T(v);
}

struct Parsed {
  ArchiveInfo info;
  std::size_t data_begin = 0;
  std::string bytes;
};

Parsed parse(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Parsed p;
  p.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  const std::string& b = p.bytes;
  const std::string where = path.string() + ": ";
  if (b.size() < sizeof kMagic + 24 || std::memcmp(b.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(where + "not a checkpoint file (bad magic)");
  std::size_t pos = sizeof kMagic;
  p.info.version = get<std::uint32_t>(b, pos);
  if (p.info.version != kCheckpointVersion)
    throw CheckpointError(where + "unsupported checkpoint format version " +
                          std::to_string(p.info.version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  p.info.scalar_bytes = get<std::uint32_t>(b, pos);
  const auto header_len = get<std::uint64_t>(b, pos);
  if (header_len > b.size() - pos - 8)
    throw CheckpointError(where + "corrupt checkpoint (header length out of range)");
  std::size_t trailer = b.size() - 8;
  const auto stored = get<std::uint64_t>(b, trailer);
  if (stored != fnv1a(b.data(), b.size() - 8))
    throw CheckpointError(where + "corrupt checkpoint (checksum mismatch)");
  try {
    p.info.meta = nlohmann::json::parse(b.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + "corrupt checkpoint header: " + e.what());
  }
  p.data_begin = pos + header_len;
  return p;
}

}  // namespace

template <typename Scalar>
const Tensor<Scalar>& Archive<Scalar>::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

template <typename Scalar>
void save_archive(const std::filesystem::path& path, const Archive<Scalar>& archive) {
  nlohmann::json header = {{"meta", archive.meta}, {"tensors", nlohmann::json::array()}};
  for (const auto& [name, t] : archive.tensors) {
    const Shape s = t.shape();
    header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, std::uint32_t(sizeof(Scalar)));
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& entry : archive.tensors) {
    const auto& t = entry.second;
    out.append(reinterpret_cast<const char*>(t.ptr()), std::size_t(t.size()) * sizeof(Scalar));
  }
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
Archive<Scalar> load_archive(const std::filesystem::path& path) {
  Parsed p = parse(path);
  if (p.info.scalar_bytes != sizeof(Scalar))
    throw CheckpointError(path.string() + ": checkpoint stores " +
                          std::to_string(8 * p.info.scalar_bytes) + "-bit values, expected " +
                          std::to_string(8 * sizeof(Scalar)));
  Archive<Scalar> a;
  std::size_t pos = p.data_begin;
  const std::size_t end = p.bytes.size() - 8;
  try {
    a.meta = p.info.meta.at("meta");
    for (const auto& entry : p.info.meta.at("tensors")) {
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) throw CheckpointError("bad tensor rank");
      Tensor<Scalar> t(Shape{dims[0], dims[1], dims[2], dims[3]});
      const std::size_t n = std::size_t(t.size()) * sizeof(Scalar);
      if (pos + n > end) throw CheckpointError(path.string() + ": truncated tensor data");
      std::memcpy(t.ptr(), p.bytes.data() + pos, n);
      pos += n;
      a.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt checkpoint header: " + e.what());
  }
  if (pos != end) throw CheckpointError(path.string() + ": trailing bytes after tensor data");
  return a;
}

ArchiveInfo inspect_archive(const std::filesystem::path& path) {
  Parsed p = parse(path);
  ArchiveInfo info = p.info;
  info.meta = p.info.meta.value("meta", nlohmann::json::object());
  return info;
}

template struct Archive<float>;
template struct Archive<double>;
template void save_archive<float>(const std::filesystem::path&, const Archive<float>&);
template void save_archive<double>(const std::filesystem::path&, const Archive<double>&);
template Archive<float> load_archive<float>(const std::filesystem::path&);
template Archive<double> load_archive<double>(const std::filesystem::path&);

}  // namespace dgsr
