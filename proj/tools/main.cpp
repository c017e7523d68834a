#include "recgraph/cli.hpp"

int main(int argc, char** argv) { return recgraph::cli::run(argc, argv); }
