// Times the OpenMP kernels against the serial reference implementations and
// checks they agree. Sizes cover the shapes the model actually runs: patch
// embeddings, attention score blocks, head projections.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <omp.h>

#include "mtsf/common.hpp"
#include "mtsf/kernels.hpp"
#include "mtsf/reference.hpp"

using namespace mtsf;

namespace {

Mat<float> random_mat(int r, int c, Rng& rng) {
  Mat<float> m(r, c);
  for (size_t i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(rng.next_range(-1.0, 1.0));
  return m;
}

double max_abs_diff(const Mat<float>& a, const Mat<float>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return worst;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = omp_get_wtime();
    fn();
    best = std::min(best, omp_get_wtime() - t0);
  }
  return best;
}

void bench_matmul(int m, int k, int n, Rng& rng) {
  Mat<float> a = random_mat(m, k, rng), b = random_mat(k, n, rng), c(m, n);
  const int reps = std::max(3, int(2e8 / (double(m) * k * n)));
  const double t_par = time_best_of(reps, [&] { kern::matmul(c, a, b); });
  Mat<float> expect;
  const double t_ser = time_best_of(std::max(1, reps / 2), [&] { expect = ref::matmul(a, b); });
  std::printf("matmul %4dx%4dx%-4d  serial %8.3f ms  parallel %8.3f ms  x%.2f  agree %.1e\n", m, k,
              n, t_ser * 1e3, t_par * 1e3, t_ser / t_par, max_abs_diff(c, expect));
}

void bench_attention(int t, int d, Rng& rng) {
  Mat<float> q = random_mat(t, d, rng), k = random_mat(t, d, rng), v = random_mat(t, d, rng);
  Mat<float> s(t, t), out(t, d);
  const int reps = std::max(3, int(1e8 / (double(t) * t * d)));
  const double t_par = time_best_of(reps, [&] {
    kern::matmul_nt(s, q, k);
    kern::scale(s, 1.0f / std::sqrt(float(d)));
    kern::softmax_rows(s);
    kern::matmul(out, s, v);
  });
  Mat<float> expect;
  const double t_ser =
      time_best_of(std::max(1, reps / 2), [&] { expect = ref::attention(q, k, v); });
  std::printf("attention T=%-4d d=%-4d    serial %8.3f ms  parallel %8.3f ms  x%.2f  agree %.1e\n",
              t, d, t_ser * 1e3, t_par * 1e3, t_ser / t_par, max_abs_diff(out, expect));
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  std::printf("threads: %d\n", omp_get_max_threads());
  Rng rng(7);
  bench_matmul(64, 192, 32, rng);    // patch embedding
  bench_matmul(128, 128, 128, rng);  // projections at temporal width
  if (!quick) bench_matmul(512, 256, 256, rng);
  bench_attention(16, 32, rng);
  bench_attention(70, 128, rng);
  if (!quick) bench_attention(256, 128, rng);
  return 0;
}
