#include "glyphgen/cli.hpp"

int main(int argc, char** argv) { return glyphgen::run(argc, argv); }
