#include "qaction/parallel.hpp"

#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qa {

namespace {
int g_thread_limit = 0;
}

void set_thread_limit(int threads) { g_thread_limit = threads > 0 ? threads : 0; }

int thread_limit() {
#ifdef _OPENMP
  return g_thread_limit > 0 ? g_thread_limit : omp_get_max_threads();
#else
  return 1;
#endif
}

void for_each_index(int count, const std::function<void(int)>& body, Execution exec) {
  if (count <= 0) return;
  std::vector<std::exception_ptr> errors(count);
  if (exec == Execution::Serial || thread_limit() == 1) {
    for (int i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
#pragma omp parallel for schedule(dynamic) num_threads(thread_limit())
    for (int i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace qa
