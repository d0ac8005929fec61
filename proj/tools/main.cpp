#include "cli.hpp"

int main(int argc, char** argv) { return cocylab::cli::main_entry(argc, argv); }
