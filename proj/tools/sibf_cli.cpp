#include "sibf/harness.hpp"

int main(int argc, char** argv) { return sibf::cli::run_cli(argc, argv); }
