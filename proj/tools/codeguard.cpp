#include "codeguard/cli.hpp"

int main(int argc, char** argv) { return codeguard::cli::run(argc, argv); }
