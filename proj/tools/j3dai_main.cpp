#include <iostream>

#include "j3dai/cli.hpp"

int main(int argc, char** argv) { return j3dai::cli::main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }
