#include "stylestage/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stylestage::cli::run(argc, argv, std::cout, std::cerr, std::cin); }
