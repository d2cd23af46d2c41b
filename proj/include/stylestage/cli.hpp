#pragma once

#include "stylestage/backend.hpp"
#include "stylestage/errors.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

namespace stylestage::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kIoError = 3,
    kNumericError = 4,
};

int exit_code_for(ErrorKind kind);

// Mixing grammar: comma-separated "lo-hi:NAME" (inclusive) or "k:NAME"
// items that must partition [0, num_stages). Throws ConfigError on malformed
// or overlapping ranges; gaps are left for mix_styles to report.
std::map<int, std::string> parse_assignment(std::string_view text, int num_stages);

// Backend registry; only "toy" ships in-process.
Backend make_backend(std::string_view name, std::uint64_t seed);

// Entry point shared by the executable and the tests. Human summaries go to
// `out`; failures write one JSON error record line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace stylestage::cli
