#include "linnaeus/cli.hpp"

int main(int argc, char** argv) { return linnaeus::cli::run(argc, argv); }
