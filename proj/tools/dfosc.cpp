#include "dfosc/cli.hpp"

int main(int argc, char** argv) { return dfosc::run_command(argc, argv); }
