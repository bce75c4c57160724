// Single compilation of the amalgamated Catch2 implementation (and its
// default main), shared by every test binary.
#include <catch2/catch_amalgamated.cpp>
