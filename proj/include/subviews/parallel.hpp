#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace subviews {

/// Selects between the OpenMP kernel and the serial reference loop.
/// Both produce bit-identical results: every index owns its own state and
/// results are written to slots keyed by index.
enum class Execution { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

/// Runs fn(i) for i in [0, count). Exceptions are captured per index and the
/// lowest-index one is rethrown after the loop, so the failure reported does
/// not depend on scheduling.
template <class Fn>
void for_each_index(Execution exec, std::size_t count, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  if (exec == Execution::parallel && count > 1) {
    const long long n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < n; ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace subviews
