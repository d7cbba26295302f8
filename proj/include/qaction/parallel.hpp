#pragma once

#include <functional>

namespace qa {

// Kernels that loop over independent boundary pairs take an Execution flag.
// Serial is the reference path; Parallel must give bit-identical results
// because every index writes its own slot and reductions run afterwards in
// index order.
enum class Execution { Serial, Parallel };

// Caps the worker count used by Execution::Parallel (<= 0 restores the
// OpenMP default).
void set_thread_limit(int threads);
int thread_limit();

// Runs body(i) for i in [0, count). If any call throws, the exception from
// the smallest failing index is rethrown after the loop.
void for_each_index(int count, const std::function<void(int)>& body, Execution exec);

}  // namespace qa
