#include <iostream>

#include "bmix/cli.hpp"

int main(int argc, char** argv) { return bmix::cli::dispatch(argc, argv, std::cout, std::cerr); }
