#include "fedcome/cli.hpp"

int main(int argc, char** argv) { return fedcome::cli::main(argc, argv); }
