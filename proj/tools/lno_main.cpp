#include <iostream>
#include <string>
#include <vector>

#include "lno/pipelines.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lno::pipelines::run_cli(args, std::cout, std::cerr);
}
