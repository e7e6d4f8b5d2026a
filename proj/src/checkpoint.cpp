#include "mtb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "mtb/error.hpp"

namespace mtb {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

namespace {

constexpr char kMagic[8] = {'M', 'T', 'B', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_doubles(std::span<const double> v) {
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size_bytes());
  }
  std::size_t size() const { return buf_.size(); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string where) : buf_(std::move(buf)), where_(std::move(where)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> get_doubles(std::size_t n) {
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError(where_ + ": truncated at byte " + std::to_string(pos_));
  }
  std::vector<char> buf_;
  std::string where_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<char> read_all(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(store.entries().size()));
  auto index = nlohmann::json::array();
  for (const auto& e : store.entries()) {
    w.put_string(e.name);
    w.put_string(e.group);
    const auto& shape = e.tensor.shape();
    w.put(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.put(static_cast<std::uint64_t>(d));
    index.push_back({{"name", e.name}, {"group", e.group}, {"shape", shape}, {"offset", w.size()},
                     {"count", e.tensor.numel()}});
    w.put_doubles(e.tensor.values());
  }
  {
    std::ofstream f(dir / "model.bin", std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / "model.bin").string());
    f.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(w.bytes())));
  nlohmann::json manifest = {{"format", "mtb-checkpoint"}, {"version", kCheckpointVersion}, {"file", "model.bin"},
                             {"bytes", w.size()},          {"fnv1a64", hex},                {"tensors", index},
                             {"meta", meta}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto bin = dir / "model.bin";
  nlohmann::json manifest;
  try {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw DataError("cannot open " + (dir / "manifest.json").string());
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  auto bytes = read_all(bin);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  if (manifest.value("fnv1a64", std::string()) != hex) throw DataError(bin.string() + ": checksum does not match manifest");

  Reader r(std::move(bytes), bin.string());
  for (char c : kMagic)
    if (r.get<char>() != c) throw DataError(bin.string() + ": not a checkpoint file");
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw DataError(bin.string() + ": unsupported checkpoint version " + std::to_string(ck.version));
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.get_string();
    t.group = r.get_string();
    const auto nd = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < nd; ++d) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    t.values = r.get_doubles(shape_numel(t.shape));
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError(bin.string() + ": trailing bytes");
  if (manifest.at("tensors").size() != ck.tensors.size()) throw DataError(bin.string() + ": manifest tensor count differs");
  ck.meta = manifest.value("meta", nlohmann::json::object());
  return ck;
}

std::size_t restore(ParamStore& store, const Checkpoint& ckpt, const std::string& prefix, bool require_all) {
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  std::size_t copied = 0;
  for (auto& e : store.entries()) {
    if (!e.name.starts_with(prefix)) continue;
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      if (require_all) throw DataError("checkpoint has no tensor '" + e.name + "'");
      continue;
    }
    if (it->second->shape != e.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + e.name + "' has shape " + shape_str(it->second->shape) +
                           ", model expects " + shape_str(e.tensor.shape()));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), e.tensor.mutable_values().begin());
    ++copied;
  }
  return copied;
}

}  // namespace mtb
