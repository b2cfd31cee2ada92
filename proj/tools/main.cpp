#include "survmc/cli.hpp"

int main(int argc, char** argv) { return survmc::cli::run(argc, argv); }
