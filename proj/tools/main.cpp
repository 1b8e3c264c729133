#include <iostream>

#include "auxvae/cli/cli.hpp"

int main(int argc, char** argv) {
  return auxvae::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
