// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "lnnfama/cli.hpp"

int main(int argc, char** argv) { return lnnfama::cli::main_entry(argc, argv, std::cout, std::cerr); }
