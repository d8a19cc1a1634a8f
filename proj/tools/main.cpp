#include <string>
#include <vector>

#include "trajgnn/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return trajgnn::run_cli(args);
}
