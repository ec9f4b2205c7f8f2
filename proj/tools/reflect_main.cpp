#include <iostream>

#include "reflect/cli/cli.hpp"

int main(int argc, char** argv) {
  return reflect::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
