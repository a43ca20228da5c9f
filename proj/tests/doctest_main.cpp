#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>

int main(int argc, char** argv) {
  // sample-level parallelism owns the cores; keep BLAS single-threaded
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  return doctest::Context(argc, argv).run();
}
