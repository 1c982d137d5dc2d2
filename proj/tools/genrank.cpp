#include <iostream>
#include <string>
#include <vector>

#include "genrank/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return genrank::cli::run(args, std::cout, std::cerr);
}
