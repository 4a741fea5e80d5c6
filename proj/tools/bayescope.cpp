#include "bayescope/experiment.hpp"

int main(int argc, char** argv) { return bayescope::run_cli(argc, argv); }
