#include "multires/cli.hpp"

int main(int argc, char** argv) { return multires::run_cli(argc, argv); }
