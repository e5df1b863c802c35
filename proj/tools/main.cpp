#include <iostream>

#include "mhs/cli.hpp"

int main(int argc, char** argv) {
  return mhs::cli::run(argc, argv, std::cin, std::cout, std::cerr);
}
