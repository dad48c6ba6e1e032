#include "kaqa/checkpoint.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kaqa {
namespace {

constexpr char kMagic[8] = {'K', 'A', 'Q', 'A', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are unsupported");

template <typename T>
T ToLittle(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

class Writer {
 public:
  template <typename T>
  void Put(T v) {
    v = ToLittle(v);
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void PutString(const std::string& s) {
    Put<std::uint64_t>(s.size());
    out_ += s;
  }
  void PutRaw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return ToLittle(v);
  }
  std::string GetString() {
    const auto n = Get<std::uint64_t>();
    Need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void GetRaw(char* p, std::size_t n) {
    Need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void Need(std::size_t n) const {
    if (n > in_.size() - pos_) throw DataError("checkpoint truncated");
  }

  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t ConfigHash(const nlohmann::json& config) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  Writer w;
  w.PutRaw(kMagic, sizeof(kMagic));
  w.Put<std::uint32_t>(kCheckpointVersion);
  w.PutString(ckpt.kind);
  w.Put<std::uint64_t>(ConfigHash(ckpt.metadata.value("config", nlohmann::json())));
  w.PutString(ckpt.metadata.dump());
  w.Put<std::uint64_t>(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    w.PutString(name);
    w.Put<std::uint64_t>(t.rank());
    for (std::size_t d : t.shape()) w.Put<std::uint64_t>(d);
    for (double v : t.values()) w.Put<double>(v);
  }
  return w.Take();
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof(kMagic)];
  r.GetRaw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const auto version = r.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.kind = r.GetString();
  const auto hash = r.Get<std::uint64_t>();
  try {
    ckpt.metadata = nlohmann::json::parse(r.GetString());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (hash != ConfigHash(ckpt.metadata.value("config", nlohmann::json()))) {
    throw DataError("checkpoint config hash mismatch");
  }
  const auto count = r.Get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.GetString();
    const auto rank = r.Get<std::uint64_t>();
    if (rank > 8) throw DataError("tensor '" + name + "' has implausible rank");
    ad::Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(r.Get<std::uint64_t>());
    std::vector<double> values(ad::NumElements(shape));
    for (double& v : values) v = r.Get<double>();
    ckpt.tensors.emplace(std::move(name), ad::Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint");
  return ckpt;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = SerializeCheckpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return DeserializeCheckpoint(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Checkpoint MakeCheckpoint(const std::string& kind, nlohmann::json metadata,
                          const ParameterSet& params) {
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.metadata = std::move(metadata);
  for (const auto& [name, t] : params.tensors()) ckpt.tensors.emplace(name, t.Clone());
  return ckpt;
}

ParameterSet ParametersFrom(const Checkpoint& ckpt) {
  ParameterSet params;
  for (const auto& [name, t] : ckpt.tensors) params.Insert(name, t.Clone(true));
  return params;
}

}  // namespace kaqa
