#include <iostream>

#include "qdetect/cli.hpp"

int main(int argc, char** argv) { return qdetect::run_cli(argc, argv, std::cout, std::cerr); }
