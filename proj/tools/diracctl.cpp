#include "diracctl/cli.hpp"

int main(int argc, char** argv) {
    diracctl::cli::RunConfig config;
    if (auto code = diracctl::cli::parse_args(argc, argv, config)) return *code;
    return diracctl::cli::run(config);
}
