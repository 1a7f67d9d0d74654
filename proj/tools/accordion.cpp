#include "accordion/cli.hpp"

int main(int argc, char** argv) { return accordion::cli::run(argc, argv); }
