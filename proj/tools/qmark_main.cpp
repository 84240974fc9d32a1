#include "qmark/cli.hpp"

int main(int argc, char** argv) {
    return qmark::cli::run(argc, argv);
}
