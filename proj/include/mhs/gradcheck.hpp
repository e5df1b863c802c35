#pragma once

// Finite-difference verification suite over every primitive, the recurrent
// building blocks and small end-to-end models.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mhs::gradcheck {

inline constexpr double kPrimitiveThreshold = 1e-5;
inline constexpr double kComponentThreshold = 1e-3;

struct Row {
  std::string component;
  double max_error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::string worst;  // "input[index]" of the largest error
  bool passed() const { return checked > 0 && max_error <= threshold; }
};

struct Report {
  std::vector<Row> rows;
  double seconds = 0.0;

  bool passed() const;
  // Row with the largest error-to-threshold ratio.
  const Row& worst() const;
};

Report run(std::uint64_t seed);

// One line per row; the runtime is not part of the table.
void write_table(std::ostream& out, const Report& report);

}  // namespace mhs::gradcheck
