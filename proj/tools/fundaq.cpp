#include "fundaq/cli.hpp"

int main(int argc, char** argv) { return fundaq::cli::run(argc, argv); }
