#include "picard_lod/cli.hpp"

int main(int argc, char** argv) { return picard_lod::cli::run(argc, argv); }
