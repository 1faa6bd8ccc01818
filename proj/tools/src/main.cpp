#include <iostream>
#include <string>
#include <vector>

#include "hybridcal/tools/commands.h"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return hybridcal::tools::run_cli(args, std::cout, std::cerr);
}
