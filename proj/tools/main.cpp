#include "biweibull/cli.hpp"

int main(int argc, char** argv) { return biweibull::cli::run(argc, argv); }
