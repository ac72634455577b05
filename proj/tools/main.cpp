#include "facecycle/cli.hpp"

int main(int argc, char** argv) { return facecycle::run_cli(argc, argv); }
