#include "sepdetect/cli.hpp"

int main(int argc, char** argv) { return sepdetect::cli::run(argc, argv); }
