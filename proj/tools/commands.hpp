#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace drnet::cli {

// Exit codes.
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kConfig = 4;
constexpr int kNumeric = 5;

// Runs one subcommand. Messages go to `out`, errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drnet::cli
