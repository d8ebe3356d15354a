#include "satnews/cli.hpp"

int main(int argc, char** argv) { return satnews::run_cli(argc, argv); }
