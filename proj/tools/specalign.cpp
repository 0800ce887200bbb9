#include "specalign/cli.hpp"

int main(int argc, char** argv) { return specalign::cli::main(argc, argv); }
