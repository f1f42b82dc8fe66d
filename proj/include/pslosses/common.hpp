#pragma once

// Shared plumbing: error types, seeded RNG helpers, compensated summation,
// a tiny worker pool, and numeric formatting used by the file writers.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pslosses {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: usage errors are handled by the
// argument parser (exit 1), everything below except DivergenceError is a
// data/validation failure (exit 2), DivergenceError is a numerical failure
// (exit 3).

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ParameterError : Error {
  using Error::Error;
};

// Loss evaluated outside its domain (e.g. log loss at a score outside (0,1)).
struct DomainError : Error {
  using Error::Error;
};

// Instance exceeds the subset-enumeration cap; callers must subsample.
struct CapacityError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

// Training aborted: non-finite or absurdly large batch objective.
struct DivergenceError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// RNG. std::mt19937_64 for the stream, but all variate generation is done by
// hand (canonical doubles, bounded ints, Box-Muller) because the standard
// distributions are implementation-defined and we want outputs that are
// reproducible from the seed alone.

using Rng = std::mt19937_64;

// splitmix64 finalizer; good bit mixing for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent child seed for job `stream` of a run seeded with `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 0x517cc1b727220a95ULL));
}

// Uniform in [0, 1) with 53 random bits.
inline double canonical_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in {0, ..., n-1} via rejection; n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw ParameterError("uniform_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % n);
}

// Standard normal via Box-Muller (one value per call; the spare is dropped so
// the draw count per call is fixed).
inline double gaussian(Rng& rng) {
  double u;
  do {
    u = canonical_double(rng);
  } while (u <= 0.0);
  const double v = canonical_double(rng);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u)) * std::cos(two_pi * v);
}

// In-place Fisher-Yates; hand-rolled because std::shuffle's draw sequence is
// implementation-defined.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

// ---------------------------------------------------------------------------
// Compensated (Neumaier) summation. The subset-sum estimators add terms of
// alternating sign whose cancellation is the whole point, so plain
// accumulation loses digits we need.

struct KahanSum {
  double sum = 0.0;
  double compensation = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      compensation += (sum - t) + x;
    } else {
      compensation += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + compensation; }
};

// ---------------------------------------------------------------------------
// Worker pool: runs fn(job) for job in [0, num_jobs) on up to num_threads
// threads. Callers write results into preallocated per-job slots, so the
// aggregate is deterministic regardless of scheduling. Exceptions are
// captured and the first one rethrown after all threads join.

template <typename Fn>
void parallel_for(std::size_t num_jobs, unsigned num_threads, Fn&& fn) {
  if (num_threads <= 1 || num_jobs <= 1) {
    for (std::size_t i = 0; i < num_jobs; ++i) fn(i);
    return;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(num_threads, num_jobs));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t job = next.fetch_add(1);
        if (job >= num_jobs) return;
        try {
          fn(job);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Thread count resolution: explicit request > PSLOSSES_THREADS > hardware.
inline unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("PSLOSSES_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// ---------------------------------------------------------------------------
// Numeric text output: 17 significant digits, enough to round-trip a double.

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace pslosses
