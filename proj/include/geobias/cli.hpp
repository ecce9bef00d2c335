#pragma once

#include <string>
#include <vector>

namespace geobias {

// Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure.
// Diagnostics go to stderr; data only to files.
int run(int argc, const char* const* argv);
// args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace geobias
