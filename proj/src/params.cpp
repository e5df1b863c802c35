#include "mhs/params.hpp"

#include <algorithm>
#include <cstring>

#include "mhs/error.hpp"

namespace mhs {

ad::Tensor& ParamSet::add(std::string name, ad::Shape shape, bool trainable) {
  if (find(name)) throw UsageError("duplicate parameter '" + name + "'");
  names_.push_back(std::move(name));
  return tensors_.emplace_back(ad::Tensor::zeros(std::move(shape), trainable));
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t ParamSet::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return *i;
}

ad::Tensor& ParamSet::at(std::string_view name) {
  return tensors_[index(name)];
}

const ad::Tensor& ParamSet::at(std::string_view name) const {
  return tensors_[index(name)];
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::uint64_t ParamSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors_)
    for (double v : t.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  return h;
}

Gradients Gradients::for_params(const ParamSet& params,
                                std::span<const std::string> sparse) {
  Gradients g;
  g.entries_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Entry& e = g.entries_[i];
    const auto& t = params.tensor(i);
    e.name = params.name(i);
    e.present = t.requires_grad();
    e.size = t.size();
    e.sparse = t.rank() == 2 &&
               std::find(sparse.begin(), sparse.end(), e.name) != sparse.end();
    e.row_width = t.rank() == 2 ? t.shape()[1] : t.size();
    if (e.present && !e.sparse) e.dense.assign(e.size, 0.0);
  }
  return g;
}

const Gradients::Entry* Gradients::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.present && e.name == name) return &e;
  return nullptr;
}

std::span<double> Gradients::dense(std::size_t i) {
  Entry& e = entries_.at(i);
  if (!e.present || e.sparse)
    throw UsageError("no dense gradient for '" + e.name + "'");
  return e.dense;
}

std::span<double> Gradients::row(std::size_t i, std::size_t r) {
  Entry& e = entries_.at(i);
  if (!e.present) throw UsageError("no gradient for '" + e.name + "'");
  if (!e.sparse) return std::span<double>(e.dense).subspan(r * e.row_width,
                                                           e.row_width);
  auto it = e.rows.find(r);
  if (it == e.rows.end())
    it = e.rows.emplace(r, std::vector<double>(e.row_width, 0.0)).first;
  return it->second;
}

double Gradients::value(std::size_t i, std::size_t k) const {
  const Entry& e = entries_.at(i);
  if (!e.present) return 0.0;
  if (!e.sparse) return e.dense[k];
  auto it = e.rows.find(k / e.row_width);
  return it == e.rows.end() ? 0.0 : it->second[k % e.row_width];
}

std::vector<double> Gradients::to_dense(std::size_t i) const {
  const Entry& e = entries_.at(i);
  if (!e.sparse) return e.present ? e.dense : std::vector<double>(e.size);
  std::vector<double> out(e.size, 0.0);
  for (const auto& [r, values] : e.rows)
    std::copy(values.begin(), values.end(), out.begin() + r * e.row_width);
  return out;
}

void Gradients::accumulate(const Gradients& other) {
  if (other.entries_.size() != entries_.size())
    throw DimensionError("gradient layouts differ");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Entry& e = entries_[i];
    const Entry& o = other.entries_[i];
    if (!e.present || !o.present) continue;
    if (e.sparse) {
      for (const auto& [r, values] : o.rows) {
        auto dst = row(i, r);
        for (std::size_t k = 0; k < values.size(); ++k) dst[k] += values[k];
      }
    } else {
      for (std::size_t k = 0; k < e.dense.size(); ++k) e.dense[k] += o.dense[k];
    }
  }
}

void Gradients::scale(double factor) {
  for (auto& e : entries_) {
    for (auto& v : e.dense) v *= factor;
    for (auto& [r, values] : e.rows)
      for (auto& v : values) v *= factor;
  }
}

double Gradients::squared_norm() const {
  double s = 0;
  for (const auto& e : entries_) {
    for (double v : e.dense) s += v * v;
    for (const auto& [r, values] : e.rows)
      for (double v : values) s += v * v;
  }
  return s;
}

void Gradients::zero() {
  for (auto& e : entries_) {
    std::fill(e.dense.begin(), e.dense.end(), 0.0);
    e.rows.clear();
  }
}

void Gradients::remove(std::size_t i) {
  Entry& e = entries_.at(i);
  e.present = false;
  e.dense.clear();
  e.rows.clear();
}

}  // namespace mhs
