#include "fae/cli.hpp"

int main(int argc, char** argv) { return fae::run_cli(argc, argv); }
