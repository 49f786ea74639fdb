#include "mkvb/cli.hpp"

int main(int argc, char** argv) { return mkvb::cli::run(argc, argv); }
