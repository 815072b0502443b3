#include "qfpt/cli.hpp"

int main(int argc, char** argv) { return qfpt::cli_main(argc, argv); }
