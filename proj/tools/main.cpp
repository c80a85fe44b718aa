#include "cli.hpp"

int main(int argc, char** argv) { return shadowlab::run_cli(argc, argv); }
