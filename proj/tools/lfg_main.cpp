#include <iostream>

#include "lfg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return lfg::run_cli(args, std::cout, std::cerr);
}
