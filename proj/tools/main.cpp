#include "zssbir/cli.hpp"

int main(int argc, char** argv) { return zssbir::cli::run(argc, argv); }
