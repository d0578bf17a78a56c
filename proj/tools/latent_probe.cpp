#include <iostream>
#include <string>
#include <vector>

#include "latent_probe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return latent_probe::cli::run(args, std::cout, std::cerr);
}
