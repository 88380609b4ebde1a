#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return otmpc::cli::run(argc, argv, std::cout, std::cerr); }
