#include "uraflb/cli.hpp"

int main(int argc, char** argv) { return uraflb::cli::run(argc, argv); }
