#include <iostream>

#include "vala/cli/cli.hpp"

int main(int argc, char** argv) { return vala::cli::run(argc, argv, std::cout, std::cerr); }
