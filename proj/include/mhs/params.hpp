#pragma once

// Named parameter tensors and matching gradient buffers.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhs/autodiff.hpp"

namespace mhs {

class ParamSet {
 public:
  ad::Tensor& add(std::string name, ad::Shape shape, bool trainable = true);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  ad::Tensor& tensor(std::size_t i) { return tensors_.at(i); }
  const ad::Tensor& tensor(std::size_t i) const { return tensors_.at(i); }

  std::optional<std::size_t> find(std::string_view name) const;
  ad::Tensor& at(std::string_view name);
  const ad::Tensor& at(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  // Total number of scalar parameters.
  std::size_t scalar_count() const;
  // Order-dependent FNV-1a hash of every value; used to detect mutation.
  std::uint64_t checksum() const;

 private:
  std::vector<std::string> names_;
  std::deque<ad::Tensor> tensors_;
};

// Gradient buffers laid out like a ParamSet. Matrices registered as sparse
// keep only the rows that were touched (embedding tables).
class Gradients {
 public:
  struct Entry {
    std::string name;
    bool present = false;
    bool sparse = false;
    std::size_t size = 0;
    std::size_t row_width = 0;
    std::vector<double> dense;
    std::map<std::size_t, std::vector<double>> rows;
  };

  Gradients() = default;
  // One entry per trainable parameter. Names in `sparse` get row storage.
  static Gradients for_params(const ParamSet& params,
                              std::span<const std::string> sparse = {});

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  const Entry* find(std::string_view name) const;

  std::span<double> dense(std::size_t i);
  std::span<double> row(std::size_t i, std::size_t r);
  // Gradient value of coordinate k of entry i, sparse or dense.
  double value(std::size_t i, std::size_t k) const;
  // Expands entry i into a dense vector.
  std::vector<double> to_dense(std::size_t i) const;

  void accumulate(const Gradients& other);
  void scale(double factor);
  double squared_norm() const;
  void zero();
  // Drops entry i, so consumers see it as missing.
  void remove(std::size_t i);

 private:
  std::vector<Entry> entries_;
};

}  // namespace mhs
