#include "reguide/cli.hpp"

int main(int argc, char** argv) { return reguide::cli::dispatch(argc, argv); }
