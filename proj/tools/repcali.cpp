#include "repcali/cli.hpp"

int main(int argc, char** argv) { return repcali::dispatch(argc, argv); }
