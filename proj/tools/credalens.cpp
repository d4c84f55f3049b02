#include <iostream>

#include "credalens/cli.hpp"

int main(int argc, char** argv) {
  return credalens::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
