#include "hacbsr/cli.hpp"

int main(int argc, char** argv) { return hacbsr::run_cli(argc, argv); }
