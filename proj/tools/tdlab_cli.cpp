#include "tdlab/cli.hpp"

int main(int argc, char** argv) { return tdlab::run_cli(argc, argv); }
