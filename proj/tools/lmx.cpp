// lmx command-line entry point. All commands and the exception-to-exit-code
// mapping live in lmx/cli.hpp; this translation unit only provides main().

#include "lmx/cli.hpp"

int main(int argc, char** argv) { return lmx::cli::run(argc, argv); }
