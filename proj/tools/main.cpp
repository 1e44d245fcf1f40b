#include "pnn/cli.hpp"

int main(int argc, char** argv) { return pnn::cli::run(argc, argv); }
