// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "ddsr/cli_io.hpp"

int main(int argc, char** argv) {
  return ddsr::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
