#include "lab/commands.hpp"

int main(int argc, char** argv) { return mosaic::lab::run_cli(argc, argv); }
