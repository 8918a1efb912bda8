#pragma once

#include <iostream>

#include "linnaeus/error.hpp"

namespace linnaeus::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitBackend = 4;
inline constexpr int kExitInternal = 5;

int exit_code(ErrorKind kind);

/// Entry point of the `linnaeus` binary. Never throws; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace linnaeus::cli
