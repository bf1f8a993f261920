#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace l1flow {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Error categories shared by the C++ core and the C API.
enum class ErrorCode {
  invalid_argument = 1,
  convergence_failure = 2,
  configuration_error = 3,
  io_error = 4,
  internal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, double last_value = 0.0)
      : std::runtime_error(what), code_(code), last_value_(last_value) {}

  ErrorCode code() const noexcept { return code_; }

  /// Last monitored quantity when the error was raised (e.g. the primal-dual
  /// gap of an iteration that hit its cap).
  double last_value() const noexcept { return last_value_; }

 private:
  ErrorCode code_;
  double last_value_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what, double last_value = 0.0);

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::invalid_argument, what);
}

/**
 * Sum with a fixed pairwise reduction tree.
 *
 * The tree shape depends only on the length of the input, so the result is
 * bit-identical no matter how the terms were produced (serially or by
 * parallel_for).
 */
double tree_sum(std::span<const double> terms);

/// Maximum of |x| over the span, 0 for an empty span.
double max_abs(std::span<const double> values);

/// Worker count used by parallel_for; read once from L1FLOW_THREADS (default 1).
unsigned thread_count();
void set_thread_count(unsigned n);

void parallel_for_chunked(std::size_t n, const std::function<void(std::size_t)>& body);

inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 14;

/**
 * Runs body(i) for i in [0, n). Every index is written by exactly one worker,
 * so bodies that only touch slot i give identical results for any thread count.
 * Small ranges always run serially.
 */
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  if (n < kParallelThreshold || thread_count() <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  parallel_for_chunked(n, std::function<void(std::size_t)>(body));
}

}  // namespace l1flow
