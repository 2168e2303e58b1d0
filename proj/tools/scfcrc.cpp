#include <iostream>

#include "scfcrc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return scfcrc::run_cli(args, std::cout, std::cerr);
}
