#include "activesl/cli.hpp"

int main(int argc, char** argv) { return activesl::run_cli(argc, argv); }
