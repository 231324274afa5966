#include "advbiom/cli/commands.hpp"

int main(int argc, char** argv) { return advbiom::cli::run_cli(argc, argv); }
