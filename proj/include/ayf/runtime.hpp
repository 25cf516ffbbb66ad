#pragma once

namespace ayf {

// Keeps large Eigen temporaries on the heap instead of fresh mmap regions;
// the training loop otherwise spends a third of its time in page faults.
// No-op outside glibc.
void configure_allocator();

}  // namespace ayf
