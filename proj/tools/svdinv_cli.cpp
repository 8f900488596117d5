#include "svdinv/cli/app.hpp"

int main(int argc, char** argv) { return svdinv::cli::run(argc, argv); }
