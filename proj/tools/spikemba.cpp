// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "spikemba/cli/commands.hpp"

int main(int argc, char** argv) { return spikemba::cli::run(argc, argv, std::cout, std::cerr); }
