#include "visforge/cli.hpp"

int main(int argc, char** argv) { return visforge::cli::main(argc, argv); }
