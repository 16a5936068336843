#pragma once

namespace token2vec {

// Keeps freed activation buffers in the heap instead of returning them to the
// OS after every op. Training allocates and frees many multi-megabyte buffers
// per step; without this glibc maps and unmaps each one. No-op off glibc.
void tune_allocator();

}  // namespace token2vec
