#include <iostream>

#include "iopcal/cli/app.hpp"

int main(int argc, char** argv) { return iopcal::cli::run(argc, argv, std::cout, std::cerr); }
