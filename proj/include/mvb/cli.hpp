#ifndef MVB_CLI_HPP
#define MVB_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace mvb::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,         ///< bad arguments, unknown command, invalid configuration
  kIo = 2,            ///< unreadable input or unwritable output
  kInapplicable = 3,  ///< the requested bound is undefined on this data
};

/// Name of the environment variable that sets the default output directory.
inline constexpr const char* kOutDirVariable = "MVB_OUT_DIR";

/// Runs one command line (without the program name). Reports go to the
/// output directory, the one-line summary to `out`, diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mvb::cli

#endif  // MVB_CLI_HPP
