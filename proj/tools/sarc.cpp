#include "sarc/cli.hpp"

int main(int argc, char** argv) { return sarc::cli_main(argc, argv); }
