#include "morphsim/workbench.hpp"

int main(int argc, char** argv) { return morphsim::workbench::run_cli(argc, argv); }
