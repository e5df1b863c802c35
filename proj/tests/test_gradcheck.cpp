#include <doctest.h>

#include <sstream>

#include "mhs/autodiff.hpp"
#include "mhs/gradcheck.hpp"

using namespace mhs;

namespace {

struct FaultGuard {
  explicit FaultGuard(ad::Op op) { ad::debug::corrupt_backward(op); }
  ~FaultGuard() { ad::debug::corrupt_backward(std::nullopt); }
};

}  // namespace

TEST_CASE("the full verification suite passes") {
  const auto report = gradcheck::run(1);
  for (const auto& row : report.rows) {
    CAPTURE(row.component);
    CHECK(row.passed());
    CHECK(row.checked > 0);
  }
  CHECK(report.passed());
  CHECK(report.rows.size() > 20);

  bool primitives = false, end_to_end = false;
  for (const auto& row : report.rows) {
    primitives |= row.threshold == gradcheck::kPrimitiveThreshold;
    end_to_end |= row.component.find("end-to-end") != std::string::npos;
  }
  CHECK(primitives);
  CHECK(end_to_end);
}

TEST_CASE("the table is deterministic for a seed") {
  std::ostringstream a, b;
  gradcheck::write_table(a, gradcheck::run(3));
  gradcheck::write_table(b, gradcheck::run(3));
  CHECK(a.str() == b.str());
}

TEST_CASE("a corrupted backward rule in any primitive is caught") {
  for (int i = 0; i <= static_cast<int>(ad::Op::neg_log_pick); ++i) {
    const auto op = static_cast<ad::Op>(i);
    CAPTURE(ad::op_name(op));
    FaultGuard guard(op);
    const auto report = gradcheck::run(1);
    CHECK_FALSE(report.passed());
    CHECK_FALSE(report.worst().passed());
  }
  CHECK(gradcheck::run(1).passed());
}
