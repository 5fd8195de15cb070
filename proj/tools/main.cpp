#include "cmt/cli.hpp"

int main(int argc, char** argv) { return cmt::run_cli(argc, argv); }
