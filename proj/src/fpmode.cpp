#include "dmmd/fpmode.hpp"

#if defined(__x86_64__) || defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace dmmd {

void enable_flush_to_zero() {
#if defined(__x86_64__) || defined(__SSE__)
  _mm_setcsr(_mm_getcsr() | 0x8040); // FTZ | DAZ
#endif
}

} // namespace dmmd
