#include "cooc_atlas/cli.hpp"

int main(int argc, char** argv) { return cooc_atlas::run_cli(argc, argv); }
