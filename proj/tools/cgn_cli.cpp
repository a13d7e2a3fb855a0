#include "cgn/cli.hpp"

int main(int argc, char** argv) { return cgn::cli::dispatch(argc, argv); }
