#pragma once

#include <iosfwd>

namespace deanet::cli {

/// Runs one `deanet` invocation. Results go to `out`, logs and the echoed
/// effective config to `err`. Returns the process exit code: 0 success,
/// 1 usage or config error, 2 data error, 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deanet::cli
