#include "inpaint/cli/commands.hpp"

int main(int argc, char **argv) { return inpaint::cli::run(argc, argv); }
