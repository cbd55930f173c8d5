#include "lcgn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace lcgn {

namespace {

constexpr char kMagic[8] = {'L', 'C', 'G', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.ema.size() != ckpt.params.size())
    throw ContractError("checkpoint EMA table must parallel the parameters");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);

  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_string(out, ckpt.config_json);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));

  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& t = ckpt.params[i];
    const auto& e = ckpt.ema[i];
    if (e.name != t.name || e.shape != t.shape ||
        e.data.size() != t.data.size())
      throw ContractError("EMA entry mismatch at " + t.name);
    write_string(out, t.name);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_pod<std::int64_t>(out, d);
    write_pod<std::uint64_t>(out, offset);  // parameter data
    offset += t.data.size() * sizeof(float);
    write_pod<std::uint64_t>(out, offset);  // EMA data
    offset += t.data.size() * sizeof(float);
  }
  write_pod<std::uint64_t>(out, offset);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& t = ckpt.params[i];
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    const auto& e = ckpt.ema[i];
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + " is not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));

  Checkpoint ckpt;
  ckpt.config_json = read_string(in);
  const auto count = read_pod<std::uint32_t>(in);
  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t param_off, ema_off;
  };
  std::vector<Entry> dir;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = read_string(in);
    const auto ndim = read_pod<std::uint32_t>(in);
    for (std::uint32_t d = 0; d < ndim; ++d)
      e.shape.push_back(read_pod<std::int64_t>(in));
    e.param_off = read_pod<std::uint64_t>(in);
    e.ema_off = read_pod<std::uint64_t>(in);
    dir.push_back(std::move(e));
  }
  const auto data_len = read_pod<std::uint64_t>(in);
  std::vector<char> blob(data_len);
  in.read(blob.data(), static_cast<std::streamsize>(data_len));
  if (!in) throw std::runtime_error("truncated checkpoint data in " + path);

  for (const auto& e : dir) {
    const auto n = static_cast<std::size_t>(shape_numel(e.shape));
    auto read_at = [&](std::uint64_t off) {
      if (off + n * sizeof(float) > data_len)
        throw std::runtime_error("checkpoint offset out of range in " + path);
      std::vector<float> v(n);
      std::memcpy(v.data(), blob.data() + off, n * sizeof(float));
      return v;
    };
    ckpt.params.push_back({e.name, e.shape, read_at(e.param_off)});
    ckpt.ema.push_back({e.name, e.shape, read_at(e.ema_off)});
  }
  return ckpt;
}

}  // namespace lcgn
