#include <string>
#include <vector>

#include "frl/cli.hpp"

int main(int argc, char** argv) {
    return frl::cli::main(std::vector<std::string>(argv + 1, argv + argc));
}
