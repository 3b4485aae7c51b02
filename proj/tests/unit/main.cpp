#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "dicke/linalg.hpp"

int main(int argc, char** argv) {
  dicke::linalg::ensure_reliable_blas(argc, argv);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
