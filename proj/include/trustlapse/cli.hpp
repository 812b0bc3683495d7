#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trustlapse {

// Runs the command line tool. args excludes the program name. Returns the
// process exit code: 0 ok, 1 data error (JSON on err), 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reads TRUSTLAPSE_LOG (trace|debug|info|warn|error|off; default warn).
void configure_logging();

}  // namespace trustlapse
