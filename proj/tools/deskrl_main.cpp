#include "deskrl/cli.hpp"

int main(int argc, char** argv) { return deskrl::run_cli(argc, argv); }
