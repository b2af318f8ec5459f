#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mtsf/nn.hpp"
#include "testutil.hpp"

using namespace mtsf;
using testutil::fd_max_rel_err;
using testutil::random_mat;

namespace {

// Scalar objective for gradient checks: project the block output onto a
// fixed random matrix. The output-side gradient is then the matrix itself.
double project(const Mat<double>& y, const Mat<double>& r) {
  REQUIRE(y.rows() == r.rows());
  REQUIRE(y.cols() == r.cols());
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += y.data()[i] * r.data()[i];
  return s;
}

void zero_params(nn::ParamRefs<double>& ps) {
  for (auto* p : ps) p->g.zero();
}

// checks analytic gradients of every parameter plus the input against
// central differences of the projection objective
template <typename Forward, typename Backward>
void check_param_grads(nn::ParamRefs<double>& ps, Mat<double>& x, const Mat<double>& r,
                       Forward&& fwd, Backward&& bwd, Rng& rng, double tol = 1e-4) {
  zero_params(ps);
  const Mat<double> dx = bwd(r);
  auto loss = [&] { return project(fwd(), r); };
  for (auto* p : ps) {
    const double worst = fd_max_rel_err(p->w.data(), p->g.data(), p->w.size(), loss, rng);
    CAPTURE(p->name);
    CHECK(worst < tol);
  }
  const double worst_x = fd_max_rel_err(x.data(), dx.data(), x.size(), loss, rng);
  CHECK(worst_x < tol);
}

}  // namespace

TEST_CASE("gelu values and derivative") {
  CHECK(nn::gelu(0.0) == 0.0);
  CHECK(nn::gelu(1.0) == doctest::Approx(0.8413447461).epsilon(1e-9));
  CHECK(nn::gelu(-1.0) == doctest::Approx(-0.1586552539).epsilon(1e-9));
  CHECK(nn::gelu(10.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(std::abs(nn::gelu(-10.0)) < 1e-12);
  Rng rng(4000);
  for (int i = 0; i < 40; ++i) {
    const double x = rng.next_range(-4.0, 4.0);
    const double h = 1e-6;
    const double fd = (nn::gelu(x + h) - nn::gelu(x - h)) / (2 * h);
    CHECK(nn::gelu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("sinusoidal table spot values") {
  const auto pe = nn::sinusoidal_position_table<double>(8, 4);
  REQUIRE(pe.rows() == 8);
  REQUIRE(pe.cols() == 4);
  for (int i = 0; i < 4; ++i) CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe(3, 0) == doctest::Approx(std::sin(3.0)).epsilon(1e-12));
  CHECK(pe(3, 1) == doctest::Approx(std::cos(3.0)).epsilon(1e-12));
  CHECK(pe(5, 2) == doctest::Approx(std::sin(0.05)).epsilon(1e-12));
  CHECK(pe(5, 3) == doctest::Approx(std::cos(0.05)).epsilon(1e-12));
  // rows are distinct, so position is actually encoded
  bool same = true;
  for (int j = 0; j < 4; ++j) same = same && pe(1, j) == pe(2, j);
  CHECK(!same);
}

TEST_CASE("linear layer gradients") {
  for (uint64_t seed : {10u, 11u, 12u, 13u}) {
    Rng rng(seed);
    nn::Linear<double> lin;
    lin.init(5, 3, rng);
    nn::ParamRefs<double> ps;
    lin.collect("lin", ps);
    Mat<double> x = random_mat<double>(4, 5, rng);
    const Mat<double> r = random_mat<double>(4, 3, rng);
    check_param_grads(
        ps, x, r, [&] { return lin.forward(x); },
        [&](const Mat<double>& dy) { return lin.backward(dy, x); }, rng);
  }
  Rng rng(1);
  nn::Linear<double> lin;
  lin.init(5, 3, rng);
  CHECK_THROWS_AS(lin.forward(Mat<double>(2, 4)), std::invalid_argument);
}

TEST_CASE("layer norm gradients and normalization") {
  for (uint64_t seed : {20u, 21u, 22u, 23u}) {
    Rng rng(seed);
    nn::LayerNorm<double> ln;
    ln.init(6);
    // non-trivial gain/bias so their gradients are exercised off the init point
    for (int j = 0; j < 6; ++j) {
      ln.gain.w(0, j) = 0.5 + 0.2 * j;
      ln.bias.w(0, j) = 0.1 * j - 0.3;
    }
    nn::ParamRefs<double> ps;
    ln.collect("ln", ps);
    Mat<double> x = random_mat<double>(3, 6, rng, -2.0, 2.0);
    const Mat<double> r = random_mat<double>(3, 6, rng);
    nn::LayerNorm<double>::Cache cache;
    check_param_grads(
        ps, x, r,
        [&] {
          nn::LayerNorm<double>::Cache c;
          return ln.forward(x, c);
        },
        [&](const Mat<double>& dy) {
          ln.forward(x, cache);
          return ln.backward(dy, cache);
        },
        rng);
  }

  // unit gain, zero bias: rows come out standardized
  Rng rng(29);
  nn::LayerNorm<double> ln;
  ln.init(8);
  Mat<double> x = random_mat<double>(4, 8, rng, -3.0, 3.0);
  nn::LayerNorm<double>::Cache c;
  const Mat<double> y = ln.forward(x, c);
  for (int i = 0; i < 4; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 8; ++j) mean += y(i, j);
    mean /= 8;
    for (int j = 0; j < 8; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("feed-forward gradients") {
  for (uint64_t seed : {30u, 31u, 32u}) {
    Rng rng(seed);
    nn::FeedForward<double> ff;
    ff.init(4, 9, rng);
    nn::ParamRefs<double> ps;
    ff.collect("ff", ps);
    Mat<double> x = random_mat<double>(3, 4, rng);
    const Mat<double> r = random_mat<double>(3, 4, rng);
    nn::FeedForward<double>::Cache cache;
    check_param_grads(
        ps, x, r,
        [&] {
          nn::FeedForward<double>::Cache c;
          return ff.forward(x, c);
        },
        [&](const Mat<double>& dy) {
          ff.forward(x, cache);
          return ff.backward(dy, cache);
        },
        rng);
  }
}

TEST_CASE("scaled dot attention") {
  SUBCASE("weights are row-stochastic") {
    Rng rng(40);
    const auto q = random_mat<double>(5, 3, rng);
    const auto k = random_mat<double>(7, 3, rng);
    const auto v = random_mat<double>(7, 4, rng);
    Mat<double> w;
    const auto y = nn::scaled_dot_attention(q, k, v, &w);
    REQUIRE(y.rows() == 5);
    REQUIRE(y.cols() == 4);
    REQUIRE(w.rows() == 5);
    REQUIRE(w.cols() == 7);
    for (int i = 0; i < 5; ++i) {
      double s = 0;
      for (int j = 0; j < 7; ++j) {
        CHECK(w(i, j) >= 0.0);
        s += w(i, j);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("input gradients match central differences") {
    for (uint64_t seed : {41u, 42u, 43u, 44u}) {
      Rng rng(seed);
      auto q = random_mat<double>(4, 3, rng);
      auto k = random_mat<double>(5, 3, rng);
      auto v = random_mat<double>(5, 2, rng);
      const auto r = random_mat<double>(4, 2, rng);
      Mat<double> w;
      nn::scaled_dot_attention(q, k, v, &w);
      Mat<double> dq, dk, dv;
      nn::scaled_dot_attention_backward(r, w, q, k, v, dq, dk, dv);
      auto loss = [&] { return project(nn::scaled_dot_attention(q, k, v), r); };
      CHECK(fd_max_rel_err(q.data(), dq.data(), q.size(), loss, rng) < 1e-4);
      CHECK(fd_max_rel_err(k.data(), dk.data(), k.size(), loss, rng) < 1e-4);
      CHECK(fd_max_rel_err(v.data(), dv.data(), v.size(), loss, rng) < 1e-4);
    }
  }
  SUBCASE("preconditions") {
    Mat<double> q(2, 3), k(4, 2), v(4, 2);
    CHECK_THROWS_AS(nn::scaled_dot_attention(q, k, v), std::invalid_argument);
    Mat<double> k2(4, 3), v2(3, 2);
    CHECK_THROWS_AS(nn::scaled_dot_attention(q, k2, v2), std::invalid_argument);
    Mat<double> qn(2, 3), kn(4, 3), vn(4, 2);
    qn(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(nn::scaled_dot_attention(qn, kn, vn), std::invalid_argument);
    Mat<double> qi(2, 3);
    kn(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(nn::scaled_dot_attention(qi, kn, vn), std::invalid_argument);
  }
}

TEST_CASE("multi-head attention gradients") {
  for (uint64_t seed : {50u, 51u, 52u}) {
    Rng rng(seed);
    nn::MultiHeadAttention<double> mha;
    mha.init(8, 2, rng);
    nn::ParamRefs<double> ps;
    mha.collect("mha", ps);
    Mat<double> x = random_mat<double>(5, 8, rng);
    const Mat<double> r = random_mat<double>(5, 8, rng);
    nn::MultiHeadAttention<double>::Cache cache;
    check_param_grads(
        ps, x, r,
        [&] {
          nn::MultiHeadAttention<double>::Cache c;
          return mha.forward(x, c);
        },
        [&](const Mat<double>& dy) {
          mha.forward(x, cache);
          return mha.backward(dy, cache);
        },
        rng);

    // head-averaged map stays row-stochastic
    const Mat<double> avg = nn::MultiHeadAttention<double>::head_average(cache);
    for (int i = 0; i < avg.rows(); ++i) {
      double s = 0;
      for (int j = 0; j < avg.cols(); ++j) s += avg(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  Rng rng(1);
  nn::MultiHeadAttention<double> bad;
  CHECK_THROWS_AS(bad.init(9, 2, rng), std::invalid_argument);
}

TEST_CASE("transformer layer gradients") {
  for (uint64_t seed : {60u, 61u, 62u, 63u}) {
    Rng rng(seed);
    nn::TransformerLayer<double> layer;
    layer.init(8, 2, 16, rng);
    nn::ParamRefs<double> ps;
    layer.collect("layer", ps);
    Mat<double> x = random_mat<double>(6, 8, rng);
    const Mat<double> r = random_mat<double>(6, 8, rng);
    nn::TransformerLayer<double>::Cache cache;
    check_param_grads(
        ps, x, r,
        [&] {
          nn::TransformerLayer<double>::Cache c;
          return layer.forward(x, c);
        },
        [&](const Mat<double>& dy) {
          layer.forward(x, cache);
          return layer.backward(dy, cache);
        },
        rng);
  }
}

TEST_CASE("uniform init respects the fan-in bound") {
  Rng rng(70);
  nn::Param<double> p;
  p.init_uniform(64, 32, 64, rng);
  const double bound = 1.0 / 8.0;
  double lo = 1e9, hi = -1e9;
  for (size_t i = 0; i < p.w.size(); ++i) {
    lo = std::min(lo, p.w.data()[i]);
    hi = std::max(hi, p.w.data()[i]);
  }
  CHECK(lo >= -bound);
  CHECK(hi <= bound);
  CHECK(hi > bound * 0.5);   // actually spreads over the interval
  CHECK(lo < -bound * 0.5);
  CHECK(p.g.rows() == 64);
  CHECK(p.g.cols() == 32);
}
