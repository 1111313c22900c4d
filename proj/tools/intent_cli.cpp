#include "intent/cli.hpp"

int main(int argc, char** argv) { return intent::run_cli(argc, argv); }
