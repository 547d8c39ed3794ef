#include <iostream>

#include "aloha/cli.hpp"

int main(int argc, char** argv) { return aloha::cli::main_entry(argc, argv, std::cout, std::cerr); }
