#include <iostream>

#include "diffeo/cli.hpp"

int main(int argc, char** argv) { return diffeo::run_cli(argc, argv, std::cout, std::cerr); }
