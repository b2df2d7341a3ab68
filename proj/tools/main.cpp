#include <iostream>

#include "plgmi/experiment/cli.hpp"

int main(int argc, char** argv) { return plgmi::experiment::run_cli(argc, argv, std::cout, std::cerr); }
