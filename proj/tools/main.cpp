#include "cli.hpp"

int main(int argc, char** argv) { return radnet::cli::run(argc, argv); }
