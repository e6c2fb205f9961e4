#include "handunc/commands.hpp"

int main(int argc, char** argv) { return handunc::cli::run(argc, argv); }
