#include <iostream>
#include <string>
#include <vector>

#include "summit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return summit::run_cli(args, std::cout, std::cerr);
}
