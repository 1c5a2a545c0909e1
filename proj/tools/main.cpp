#include "hmmseq/cli.hpp"

int main(int argc, char** argv) { return hmmseq::run_command(argc, argv); }
