#include "verifact/cli.hpp"

#include <string>
#include <vector>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return verifact::cli::run(args, verifact::cli::Environment::from_process());
}
