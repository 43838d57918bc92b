#include <iostream>

#include "cli.hpp"
#include "dhgcn/runtime.hpp"

int main(int argc, char** argv) {
    dhgcn::tune_allocator();
    return dhgcn::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
