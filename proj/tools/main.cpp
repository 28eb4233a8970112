#include <iostream>

#include "flockd_cli/commands.hpp"

int main(int argc, char** argv) { return flockd::cli::run_cli(argc, argv, std::cout, std::cerr); }
