#include "cli.hpp"

int main(int argc, char** argv) { return lqt::cli::run(argc, argv); }
