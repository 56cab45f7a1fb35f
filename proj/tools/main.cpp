#include <iostream>
#include <string>
#include <vector>

#include "voxgrid/cli.hpp"

int main(int argc, char** argv) {
  return voxgrid::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
