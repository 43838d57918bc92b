#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dhgcn {

/// Raises glibc's mmap and trim thresholds so large tensor buffers are reused across steps.
inline void tune_allocator() noexcept {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace dhgcn
