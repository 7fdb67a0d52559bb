#include "crreg/cli.hpp"

int main(int argc, char **argv) {
    return crreg::run(argc, argv);
}
