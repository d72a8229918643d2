#include "scgan/cli.hpp"

int main(int argc, char** argv) { return scgan::run_cli(argc, argv); }
