#include "l1flow/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

namespace l1flow {

void fail(ErrorCode code, const std::string& what, double last_value) {
  throw Error(code, what, last_value);
}

namespace {

constexpr std::size_t kLeafSize = 8;

double tree_sum_range(const double* data, std::size_t n) {
  if (n <= kLeafSize) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return tree_sum_range(data, half) + tree_sum_range(data + half, n - half);
}

std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> setting = [] {
    unsigned n = 1;
    if (const char* env = std::getenv("L1FLOW_THREADS")) {
      const long parsed = std::strtol(env, nullptr, 10);
      if (parsed > 0) n = static_cast<unsigned>(parsed);
    }
    return n;
  }();
  return setting;
}

}  // namespace

double tree_sum(std::span<const double> terms) {
  return tree_sum_range(terms.data(), terms.size());
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

unsigned thread_count() { return thread_setting().load(); }

void set_thread_count(unsigned n) { thread_setting().store(std::max(1u, n)); }

void parallel_for_chunked(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = std::max(1u, thread_count());
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace l1flow
