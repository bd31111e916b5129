#include <iostream>

#include "epdg/cli/commands.hpp"

int main(int argc, char** argv) { return epdg::cli::run(argc, argv, std::cout, std::cerr); }
