#include "clippo/cli.hpp"

int main(int argc, char** argv) { return clippo::dispatch(argc, argv); }
