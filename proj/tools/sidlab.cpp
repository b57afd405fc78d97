#include <iostream>

#include "sidlab/cli.hpp"

int main(int argc, char** argv) { return sidlab::run_cli(argc, argv, std::cout, std::cerr); }
