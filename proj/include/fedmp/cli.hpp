#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fedmp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Entry point shared by the `fedmp` executable and the tests. args excludes
/// the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fedmp::cli
