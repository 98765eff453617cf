#include <iostream>

#include "deanet/cli.hpp"

int main(int argc, char** argv) { return deanet::cli::run(argc, argv, std::cout, std::cerr); }
