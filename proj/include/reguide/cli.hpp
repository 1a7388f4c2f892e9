#pragma once

#include <string>
#include <vector>

namespace reguide::cli {

// Full pipeline entry point. Exit codes: 0 success, 1 domain error, 2 usage
// error. --seed falls back to the REGUIDE_SEED environment variable. Every
// run writes "<subcommand>-manifest.json" (resolved config plus input/output
// content hashes, no paths) into the output directory.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace reguide::cli
