#include <iostream>

#include "spatialdr/cli.hpp"

int main(int argc, char** argv) { return spatialdr::cli::run(argc, argv, std::cout, std::cerr); }
