#include "mixedcurv/cli.hpp"

int main(int argc, char** argv) { return mixedcurv::cli::main(argc, argv); }
