#include <iostream>

#include "planloc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return planloc::run_cli(args, std::cout, std::cerr);
}
