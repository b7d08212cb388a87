#include "dncb/cli.hpp"

int main(int argc, char** argv) { return dncb::cli_main(argc, argv); }
