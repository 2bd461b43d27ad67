#include <iostream>

#include "clincon/cli.hpp"

int main(int argc, char** argv) { return clincon::run_cli(argc, argv, std::cout, std::cerr); }
