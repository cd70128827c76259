#include <iostream>

#include "ams/cli.hpp"

int main(int argc, char** argv) { return ams::run_cli(argc, argv, std::cout, std::cerr); }
