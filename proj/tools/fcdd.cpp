#include "fcdd/cli.hpp"

int main(int argc, char** argv) { return fcdd::run_cli(argc, argv); }
