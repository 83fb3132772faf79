#include "slmw/cli.hpp"

int main(int argc, char** argv) { return slmw::cli::run(argc, argv); }
