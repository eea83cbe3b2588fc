#include <iostream>

#include "gpf_cli/cli.hpp"

int main(int argc, char** argv) { return gpf::cli::run(argc, argv, std::cout, std::cerr); }
