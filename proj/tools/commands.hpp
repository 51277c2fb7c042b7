#pragma once

namespace ki67::cli {

// Parses the command line and runs one subcommand. Library errors propagate.
int run_cli(int argc, char** argv);

}  // namespace ki67::cli
