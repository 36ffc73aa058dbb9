#include "wgf/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return wgf::cli::run(argc, argv, std::cout, std::cerr); }
