#pragma once

// Command-line front end. Exit codes: 0 success, 1 verification failure,
// 2 usage or configuration error, 3 runtime or integrity failure.

#include <iosfwd>

namespace mhs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerification = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace mhs::cli
