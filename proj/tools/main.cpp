#include "neurodecode/experiment.hpp"

int main(int argc, char** argv) { return neurodecode::run_cli(argc, argv); }
