// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include <vector>

#include "mtr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mtr::run_command(args);
}
