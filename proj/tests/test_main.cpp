#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "frwkv/runtime.hpp"

int main(int argc, char** argv) {
  frwkv::tune_allocator();
  return doctest::Context(argc, argv).run();
}
