#include <iostream>

#include "isd/cli.hpp"

int main(int argc, char** argv) {
  return isd::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
