#include "cli.hpp"

int main(int argc, char** argv) { return hedonic::cli::run(argc, argv); }
