// commands.hpp
//
// The epdg_audit command line: discover, scan, analyze, audit-config,
// simulate and mock-fleet.

#pragma once

#include <iosfwd>
#include <string>

namespace epdg::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int resolver = 2;
inline constexpr int unreachable = 3;  // --strict scans only
inline constexpr int unauthorized = 4;
}  // namespace exit_code

// EPDG_AUDIT_DATA when set, else the source tree
std::string data_dir();
std::string data_file(const std::string& name);

// Parses argv and runs one subcommand. Records go to `out` unless --output
// names a file; diagnostics and summaries go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace epdg::cli
