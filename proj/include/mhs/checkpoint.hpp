#pragma once

// Binary checkpoint container.
//
//   magic "MHSRNNCK" | u32 version | metadata | vocabulary | tensors | u64 hash
//
// All integers and doubles are little-endian. Metadata is a block of
// `key=value` lines; tensors carry their canonical name, rank, dims and
// values. The trailing FNV-1a hash covers every preceding byte.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mhs/autodiff.hpp"

namespace mhs::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[8] = {'M', 'H', 'S', 'R', 'N', 'N', 'C', 'K'};

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> vocabulary;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;

  const ad::Tensor* find(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
};

void write(std::ostream& out, const Checkpoint& ckpt);
// Throws IntegrityError on bad magic, version mismatch, truncation or hash
// mismatch.
Checkpoint read(std::istream& in);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

}  // namespace mhs::ckpt
