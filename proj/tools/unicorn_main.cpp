#include "unicorn/cli.hpp"

int main(int argc, char** argv) { return unicorn::cli::run(argc, argv); }
