#include <iostream>

#include "kvit/cli.hpp"

int main(int argc, char** argv) { return kvit::run_cli(argc, argv, std::cout, std::cerr); }
