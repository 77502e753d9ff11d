#include "ovod/cli.hpp"

int main(int argc, char** argv) { return ovod::cli_main(argc, argv); }
