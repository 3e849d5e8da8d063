#include <iostream>

#include "vmr/cli.hpp"

int main(int argc, char** argv) { return vmr::cli::dispatch(argc, argv, std::cout, std::cerr); }
