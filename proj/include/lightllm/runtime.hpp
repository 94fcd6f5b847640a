#pragma once

namespace lightllm {

// Keeps large tensor buffers on the heap instead of fresh mmap'd pages, which
// otherwise dominate a training step (page faults + kernel zeroing). No-op
// outside glibc. Safe to call repeatedly.
void tune_allocator();

}  // namespace lightllm
