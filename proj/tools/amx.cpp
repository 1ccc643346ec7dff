#include "amx/cli/cli.hpp"

int main(int argc, char** argv) { return amx::cli::run(argc, argv); }
