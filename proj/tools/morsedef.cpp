#include "morsedef/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return morsedef::cli::run(argc, argv, std::cout, std::cerr);
}
