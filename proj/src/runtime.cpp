#include "frwkv/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__ on glibc systems

#if defined(__GLIBC__)
#include <malloc.h>
#endif

FRWKV_BEGIN_NAMESPACE

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc rejects larger values
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

FRWKV_END_NAMESPACE
