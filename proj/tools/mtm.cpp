#include "mtm/cli/cli.hpp"

int main(int argc, char** argv) { return mtm::cli::run(argc, argv); }
