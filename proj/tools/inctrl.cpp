#include "inctrl/cli.hpp"

int main(int argc, char** argv) { return inctrl::cli::main(argc, argv); }
