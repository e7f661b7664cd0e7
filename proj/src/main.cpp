#include <iostream>

#include "aprune/cli.hpp"

int main(int argc, char** argv) {
  return aprune::run_cli(argc, argv, std::cout, std::cerr);
}
