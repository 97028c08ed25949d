#include <iostream>
#include <string>
#include <vector>

#include "s2pec/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return s2pec::run_cli(args, std::cout, std::cerr);
}
