#include "cli.hpp"

int main(int argc, char** argv) { return rmt::cli::main_entry(argc, argv); }
