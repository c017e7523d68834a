#pragma once

#include <string>
#include <vector>

namespace recgraph::cli {

// Entry point shared by the binary and the tests. Returns the process exit
// status; on failure a single line `<category>: <detail>` goes to err.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);
int run(int argc, char** argv);

}  // namespace recgraph::cli
