#include "celsim/cli.hpp"

int main(int argc, char** argv) { return celsim::run_cli(argc, argv); }
