#include "homeagent/cli.hpp"

int main(int argc, char** argv) {
    return homeagent::cli::run(argc, argv, {std::cin, std::cout, std::cerr});
}
