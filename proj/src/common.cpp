#include "mtsf/common.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace mtsf {

void apply_thread_env() {
  const char* env = std::getenv("MULTITSF_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 0)
    throw std::invalid_argument("MULTITSF_THREADS must be a non-negative integer, got '" +
                                std::string(env) + "'");
  // 0 asks for strictly serial execution; otherwise use exactly v threads
  omp_set_num_threads(v == 0 ? 1 : static_cast<int>(v));
}

}  // namespace mtsf
