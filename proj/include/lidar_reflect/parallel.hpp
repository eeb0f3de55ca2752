#pragma once

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lidar_reflect::parallel {

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline int hardware_threads() {
#if defined(_OPENMP)
  return omp_get_num_procs();
#else
  return 1;
#endif
}

// Sets the OpenMP team size for the lifetime of the guard.
class ScopedThreads {
 public:
  explicit ScopedThreads(int threads) : previous_(max_threads()) { set(threads > 0 ? threads : 1); }
  ~ScopedThreads() { set(previous_); }
  ScopedThreads(const ScopedThreads&) = delete;
  ScopedThreads& operator=(const ScopedThreads&) = delete;

 private:
  static void set([[maybe_unused]] int n) {
#if defined(_OPENMP)
    omp_set_num_threads(n);
#endif
  }
  int previous_;
};

}  // namespace lidar_reflect::parallel
