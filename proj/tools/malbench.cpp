#include <iostream>

#include "malbench/cli.hpp"

int main(int argc, char** argv) { return malbench::run_subcommand(argc, argv, std::cout, std::cerr); }
