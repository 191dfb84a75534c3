#include "bdan/runtime.hpp"

#include <cstddef>  // pulls in the libc feature macros

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace bdan {

void configure_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace bdan
