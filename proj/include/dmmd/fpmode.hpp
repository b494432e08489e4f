#pragma once

namespace dmmd {

/// Flush denormals to zero on the calling thread (threads it creates afterwards inherit it).
/// Narrow RBF kernels underflow into subnormals, which are an order of magnitude slower.
void enable_flush_to_zero();

} // namespace dmmd
