#include <iostream>

#include "rlplace/cli.hpp"

int main(int argc, char** argv) { return rlplace::cli::run(argc, argv, std::cout, std::cerr); }
