// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "gode/cli.hpp"

int main(int argc, char** argv) { return gode::cli::run(argc, argv, std::cout, std::cerr); }
