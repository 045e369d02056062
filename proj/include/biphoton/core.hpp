#pragma once

// Shared constants, error types and a small parallel-for used by the
// spectral modules.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace biphoton {

inline constexpr const char* kVersion = "0.1.0";

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
/// Speed of light in nm/ps.
inline constexpr double kSpeedOfLight = 299792.458;
inline constexpr cplx kI{0.0, 1.0};

/// Angular frequency (rad/ps) of light with vacuum wavelength `lambda_nm`.
inline double wavelength_to_omega(double lambda_nm) { return kTwoPi * kSpeedOfLight / lambda_nm; }
inline double omega_to_wavelength(double omega) { return kTwoPi * kSpeedOfLight / omega; }

// Error hierarchy. Every module throws one of these; the CLI maps them to a
// nonzero exit status with the module name attached.

/// Argument outside the range a model is valid for.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input (bad shape, negative intensity, unknown label, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested state has zero norm.
class DegenerateStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  os.precision(10);
  (os << ... << std::forward<Args>(args));
  return os.str();
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

inline double sqr(double x) { return x * x; }

}  // namespace detail

/// Worker count for the parallel loops. BIPHOTON_THREADS overrides the
/// hardware concurrency; values < 1 are ignored.
inline unsigned thread_count() {
  if (const char* env = std::getenv("BIPHOTON_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n). Iterations must be independent; results are
/// identical for any thread count because each index is processed exactly once.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Uniform grid [lo, hi] with n points (n >= 2).
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw ValidationError("linspace needs at least 2 points");
  std::vector<double> v(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + step * static_cast<double>(i);
  v.back() = hi;
  return v;
}

}  // namespace biphoton
