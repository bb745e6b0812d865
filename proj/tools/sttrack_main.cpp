#include <iostream>

#include "sttrack/harness/cli.hpp"

int main(int argc, char** argv) { return sttrack::harness::run_cli(argc, argv, std::cout, std::cerr); }
