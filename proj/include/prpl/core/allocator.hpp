#pragma once

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace prpl {

/// Keeps large activation buffers on the heap instead of fresh mmap/munmap pairs per call.
inline void tune_allocator() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace prpl
