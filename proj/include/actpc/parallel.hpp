#pragma once

#include <exception>
#include <mutex>

namespace actpc {

/// OpenMP loop over [0, n) that carries the first exception thrown by `body`
/// out of the parallel region. Iterations are independent; results must not
/// depend on scheduling.
template <class Body>
void parallel_for(long n, int workers, Body&& body) {
  std::exception_ptr error;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : 1)
  for (long i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace actpc
