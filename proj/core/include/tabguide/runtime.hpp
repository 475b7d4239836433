#pragma once

namespace tabguide {

/// Keeps freed matrix buffers in the heap instead of returning them to the
/// kernel. Training reallocates the same few hundred KB per batch; with the
/// default glibc thresholds each one is a fresh mmap and a round of page
/// faults. No-op on other C libraries. Call once at program start.
void tune_allocator();

}  // namespace tabguide
