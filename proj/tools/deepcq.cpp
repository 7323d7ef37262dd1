#include "deepcq/cli.hpp"

int main(int argc, char** argv) { return deepcq::cli::run(argc, argv); }
