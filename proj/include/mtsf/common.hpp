#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mtsf {

// Error taxonomy shared across modules. Precondition violations use
// std::invalid_argument directly.
struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct storage_error : std::runtime_error {
  explicit storage_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct generation_error : std::runtime_error {
  explicit generation_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct undefined_metric_error : std::runtime_error {
  explicit undefined_metric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic 64-bit generator (splitmix64). All randomness in the project
// flows through this so datasets, init and sampling are bit-identical across
// platforms; std:: distributions are implementation-defined and not used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), n >= 1
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // uniform in [lo, hi)
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // standard normal, Box-Muller; consumes two uniforms per call so the
  // stream position stays a pure function of the call count
  double next_gaussian() {
    double u1 = 1.0 - next_unit();
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

// Derives an independent child seed from (seed, index); used for per-episode
// and per-epoch streams.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  Rng r(seed ^ (0xD1342543DE82EF95ull * (index + 1)));
  r.next_u64();
  return r.next_u64();
}

// Applies the MULTITSF_THREADS env var: 0 means strict single-threaded,
// k > 0 caps OpenMP at k threads, unset leaves the OpenMP default.
void apply_thread_env();

}  // namespace mtsf
