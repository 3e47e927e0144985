#include "cdisent/harness/cli.hpp"

int main(int argc, char** argv) { return cdisent::harness::run_cli(argc, argv); }
