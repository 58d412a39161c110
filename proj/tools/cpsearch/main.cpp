#include <iostream>

#include "cps/cli.hpp"

int main(int argc, char** argv) {
    return cps::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
