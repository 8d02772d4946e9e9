#ifndef COOC_ATLAS_CLI_HPP
#define COOC_ATLAS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace cooc_atlas {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Subcommands: generate, train, eval, query, serve. `args` excludes the
// program name. Results go to `out`, logs and one-line diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

// Default sidecar path for a synthetic table: the extension replaced by .meta.
std::string sidecar_path_for(const std::string& table_path);

}

#endif
