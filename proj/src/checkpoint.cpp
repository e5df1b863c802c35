#include "mhs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mhs/error.hpp"

namespace mhs::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw IntegrityError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const ad::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end())
    throw IntegrityError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

void write(std::ostream& out, const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kFormatVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw UsageError("metadata entry '" + k + "' is not representable");
    meta += k + "=" + v + "\n";
  }
  w.put_string(meta);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.vocabulary.size()));
  for (const auto& tok : ckpt.vocabulary) w.put_string(tok);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.put_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.values()) w.put<double>(v);
  }
  w.put<std::uint64_t>(fnv1a(w.bytes()));
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("failed to write checkpoint");
}

Checkpoint read(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IntegrityError("not a checkpoint file (bad magic bytes)");
  Reader r(std::string_view(bytes).substr(sizeof kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw IntegrityError("checkpoint format version " +
                         std::to_string(version) + " is not supported (expected " +
                         std::to_string(kFormatVersion) + ")");
  if (bytes.size() < sizeof kMagic + 12)
    throw IntegrityError("checkpoint is truncated");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);

  Checkpoint ckpt;
  Reader b(body.substr(sizeof kMagic + 4));
  std::istringstream meta(b.get_string());
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IntegrityError("malformed checkpoint metadata");
    ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto n_vocab = b.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_vocab; ++i)
    ckpt.vocabulary.push_back(b.get_string());
  const auto n_tensors = b.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = b.get_string();
    const auto rank = b.get<std::uint32_t>();
    if (rank > 2) throw IntegrityError("tensor '" + name + "' has rank > 2");
    ad::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(b.get<std::uint64_t>()));
      n *= shape.back();
    }
    if (n > body.size()) throw IntegrityError("checkpoint is truncated");
    std::vector<double> values(n);
    for (auto& v : values) v = b.get<double>();
    ckpt.tensors.emplace_back(std::move(name),
                              ad::Tensor(std::move(shape), std::move(values)));
  }
  if (sizeof kMagic + 4 + b.pos() != body.size())
    throw IntegrityError("checkpoint has trailing bytes");
  if (fnv1a(body) != stored)
    throw IntegrityError("checkpoint hash mismatch (file is corrupted)");
  return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write(out, ckpt);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  return read(in);
}

}  // namespace mhs::ckpt
