#include "geobias/cli.hpp"

int main(int argc, char** argv) { return geobias::run(argc, argv); }
