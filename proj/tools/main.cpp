#include "subviews/cli.hpp"

int main(int argc, char** argv) { return subviews::run_cli(argc, argv); }
