#include "apafa/io.hpp"

int main(int argc, char** argv) { return apafa::cli_main(argc, argv); }
