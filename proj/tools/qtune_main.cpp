#include "qtune/harness.hpp"

int main(int argc, char** argv) { return qtune::harness::run_cli(argc, argv); }
