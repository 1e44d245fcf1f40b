#pragma once

#include <string>
#include <vector>

namespace pnn::cli {

/// Entry point behind the pnn binary. argv[0] is the program name, as in
/// main(). Returns the process exit status: 0 iff all requested outputs
/// were written.
int run(int argc, const char* const* argv);

/// Convenience overload for in-process invocation (tests).
int run(const std::vector<std::string>& args_without_program);

}  // namespace pnn::cli
