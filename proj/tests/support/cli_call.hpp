#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "linnaeus/cli.hpp"

namespace cli_call {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

/// Runs the command-line entry point in-process.
inline Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "linnaeus");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = linnaeus::cli::run(int(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

}  // namespace cli_call
