#pragma once

namespace segicl {

// Caps the OpenMP team size for every parallel region in the process.
// n <= 0 leaves the runtime default in place.
void set_thread_count(int n);

int thread_count();

}  // namespace segicl
