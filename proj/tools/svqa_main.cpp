#include <iostream>

#include "starvqa/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return starvqa::run_cli(args, std::cout, std::cerr);
}
