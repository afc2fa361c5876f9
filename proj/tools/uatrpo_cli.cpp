#include "uatrpo/cli.hpp"

int main(int argc, char** argv) { return uatrpo::run_cli(argc, argv); }
