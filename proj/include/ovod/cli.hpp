#pragma once

#include <iosfwd>

namespace ovod {

/// Entry point behind the `ovod` tool. Returns 0 on success, 1 on invalid
/// input or usage, 2 on I/O failure.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace ovod
