#include <iostream>
#include <string>
#include <vector>

#include "satseries/cli/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return satseries::cli::run_cli(args, std::cout, std::cerr);
}
