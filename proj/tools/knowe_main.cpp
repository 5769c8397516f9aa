#include "knowe/cli.hpp"

int main(int argc, char** argv) { return knowe::run_cli(argc, argv); }
