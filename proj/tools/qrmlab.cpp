#include "qrmlab/cli.hpp"

int main(int argc, char** argv) { return qrmlab::cli::run_cli(argc, argv); }
