#pragma once

namespace bdan {

/// Keeps large freed blocks on the heap instead of returning them to the OS.
/// Every op allocates a fresh output buffer, and re-faulting multi-megabyte
/// pages otherwise dominates a training step. No-op outside glibc.
void configure_allocator();

}  // namespace bdan
