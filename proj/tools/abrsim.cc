#include <iostream>

#include "abrsim/cli.h"

int main(int argc, char** argv) { return abrsim::RunCli(argc, argv, std::cout, std::cerr); }
