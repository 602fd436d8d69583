#include "conformal_ts/commands.hpp"

int main(int argc, char** argv) {
    return cts::run_cli(argc, argv);
}
