#include "igeood/cli.hpp"

int main(int argc, char** argv) { return igeood::cli_main(argc, argv); }
