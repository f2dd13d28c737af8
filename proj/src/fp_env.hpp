#pragma once

// Flush-to-zero / denormals-are-zero for the lifetime of the guard. Mostly
// black images drive activations and gradients into the subnormal range,
// which costs about 2x in convolution time on x86.

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace cfrep::detail {

class FlushDenormals {
public:
#if defined(__SSE__)
    FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
    ~FlushDenormals() { _mm_setcsr(saved_); }
#else
    FlushDenormals() = default;
#endif
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
#if defined(__SSE__)
    unsigned int saved_;
#endif
};

}  // namespace cfrep::detail
