#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mtsf/losses.hpp"
#include "testutil.hpp"

using namespace mtsf;
using testutil::fd_max_rel_err;
using testutil::random_labels;
using testutil::random_mat;
using testutil::rel_err;

namespace {

// Independent oracle for the row-wise two-way loss: plain loops, direct
// exp/log (no max shift), no shared code with the production path. Only
// valid for moderate logits, which the comparison instances stay within.
double naive_two_way(const Mat<double>& x, const Mat<uint8_t>& y, double gamma) {
  double total = 0.0;
  int used = 0;
  for (int i = 0; i < x.rows(); ++i) {
    double sum_n = 0.0, sum_p = 0.0;
    int np = 0, nn = 0;
    for (int j = 0; j < x.cols(); ++j) {
      if (y(i, j)) {
        sum_p += std::exp(-x(i, j) / gamma);
        ++np;
      } else {
        sum_n += std::exp(x(i, j));
        ++nn;
      }
    }
    if (np == 0 || nn == 0) continue;
    const double z = std::log(sum_n) + gamma * std::log(sum_p);
    total += std::log(1.0 + std::exp(z));
    ++used;
  }
  return used == 0 ? 0.0 : total / used;
}

}  // namespace

TEST_CASE("two-way loss equals the naive-loop oracle on 200 random instances") {
  Rng rng(2001);
  int nontrivial = 0;
  for (int iter = 0; iter < 200; ++iter) {
    const int s = 1 + rng.next_int(8);
    const int c = 2 + rng.next_int(5);  // C <= 6
    const auto x = random_mat<double>(s, c, rng, -5.0, 5.0);
    const auto y = random_labels(s, c, rng, 0.4);
    const double gamma = 0.5 + rng.next_unit() * 2.0;
    const double got = two_way_loss(x, y, gamma);
    const double want = naive_two_way(x, y, gamma);
    CHECK(rel_err(got, want) < 1e-10);
    const double got_c = two_way_loss_classwise(x, y, gamma);
    const double want_c = naive_two_way(x.transposed(), y.transposed(), gamma);
    CHECK(rel_err(got_c, want_c) < 1e-10);
    if (want > 0) ++nontrivial;
  }
  CHECK(nontrivial > 150);  // the sweep must actually exercise the formula
}

TEST_CASE("frozen hand values") {
  SUBCASE("equal positive and negative logits give ln 2") {
    Mat<double> x(1, 2);
    x(0, 0) = 1.3;
    x(0, 1) = 1.3;
    Mat<uint8_t> y(1, 2);
    y(0, 0) = 1;
    CHECK(std::abs(two_way_loss(x, y, 1.0) - std::log(2.0)) < 1e-9);
  }
  SUBCASE("pos 2, neg 0 gives ln(1+e^-2)") {
    Mat<double> x(1, 2);
    x(0, 0) = 2.0;
    x(0, 1) = 0.0;
    Mat<uint8_t> y(1, 2);
    y(0, 0) = 1;
    const double expect = std::log(1.0 + std::exp(-2.0));
    CHECK(std::abs(two_way_loss(x, y, 1.0) - expect) < 1e-9);
    // column-wise dual of the same configuration
    Mat<double> xc(2, 1);
    xc(0, 0) = 2.0;
    xc(1, 0) = 0.0;
    Mat<uint8_t> yc(2, 1);
    yc(0, 0) = 1;
    CHECK(std::abs(two_way_loss_classwise(xc, yc, 1.0) - expect) < 1e-9);
  }
  SUBCASE("presence BCE midpoint and hand example") {
    Mat<double> p(1, 2, 0.5);
    Mat<uint8_t> h(1, 2);
    h(0, 0) = 1;
    CHECK(std::abs(bce_prob_loss(p, h) - std::log(2.0)) < 1e-9);
    Mat<double> p2(1, 2);
    p2(0, 0) = 0.9;
    p2(0, 1) = 0.2;
    const double expect = -(std::log(0.9) + std::log(0.8)) / 2.0;
    CHECK(std::abs(bce_prob_loss(p2, h) - expect) < 1e-9);
    CHECK(expect == doctest::Approx(0.164252).epsilon(1e-4));
    // perfect prediction collapses to the clamp floor
    Mat<double> p3(1, 2);
    p3(0, 0) = 1.0;
    p3(0, 1) = 0.0;
    CHECK(bce_prob_loss(p3, h) < 1e-6);
  }
}

TEST_CASE("transposition duality is exact") {
  Rng rng(2002);
  for (int iter = 0; iter < 50; ++iter) {
    const int s = 1 + rng.next_int(7), c = 1 + rng.next_int(7);
    const auto x = random_mat<double>(s, c, rng, -8.0, 8.0);
    const auto y = random_labels(s, c, rng, 0.4);
    const double gamma = 0.25 + rng.next_unit() * 3.0;
    // bitwise equality, not approximate: the class-wise path must be the
    // row-wise path on the transpose
    CHECK(two_way_loss_classwise(x, y, gamma) ==
          two_way_loss(x.transposed(), y.transposed(), gamma));
  }
}

TEST_CASE("empty-set conventions") {
  Mat<double> x(2, 3, 1.0);
  Mat<uint8_t> all_pos(2, 3, 1);
  CHECK(two_way_loss(x, all_pos, 1.0) == 0.0);
  Mat<uint8_t> all_neg(2, 3, 0);
  CHECK(two_way_loss(x, all_neg, 1.0) == 0.0);

  // one valid row, one empty-positive row: divisor counts only the valid row
  Mat<double> x2(2, 2);
  x2(0, 0) = 2.0;
  x2(0, 1) = 0.0;
  x2(1, 0) = 5.0;
  x2(1, 1) = 5.0;
  Mat<uint8_t> y2(2, 2);
  y2(0, 0) = 1;
  CHECK(std::abs(two_way_loss(x2, y2, 1.0) - std::log(1.0 + std::exp(-2.0))) < 1e-12);
}

TEST_CASE("separation limit: well-separated logits drive the loss to zero") {
  const double m = 20.0;
  Mat<double> x(1, 4);
  Mat<uint8_t> y(1, 4);
  x(0, 0) = m;
  x(0, 1) = m;
  y(0, 0) = y(0, 1) = 1;
  x(0, 2) = -m;
  x(0, 3) = -m;
  CHECK(two_way_loss(x, y, 1.0) < 1e-8);
  CHECK(two_way_loss_classwise(x, y, 1.0) == 0.0);  // columns have single polarity
}

TEST_CASE("monotonicity: raising a negative logit never lowers the loss") {
  Rng rng(2003);
  for (int iter = 0; iter < 30; ++iter) {
    const int s = 1 + rng.next_int(5), c = 2 + rng.next_int(5);
    auto x = random_mat<double>(s, c, rng, -3.0, 3.0);
    const auto y = random_labels(s, c, rng, 0.4);
    const double base = two_way_loss(x, y, 1.0);
    const int i = rng.next_int(s), j = rng.next_int(c);
    x(i, j) += 0.5;
    const double bumped = two_way_loss(x, y, 1.0);
    if (y(i, j))
      CHECK(bumped <= base + 1e-12);  // positives: higher logit, lower loss
    else
      CHECK(bumped >= base - 1e-12);
  }
}

TEST_CASE("numerical stability at |x| = 1e4") {
  Mat<double> x(2, 4);
  x(0, 0) = 1e4;
  x(0, 1) = -1e4;
  x(0, 2) = 1e4;
  x(0, 3) = -1e4;
  x(1, 0) = -1e4;
  x(1, 1) = 1e4;
  x(1, 2) = -1e4;
  x(1, 3) = 1e4;
  Mat<uint8_t> y(2, 4);
  y(0, 0) = y(0, 1) = 1;
  y(1, 2) = y(1, 3) = 1;
  Mat<double> g;
  const double loss = two_way_loss(x, y, 1.0, &g);
  CHECK(std::isfinite(loss));
  CHECK(loss >= 0.0);
  for (size_t i = 0; i < g.size(); ++i) CHECK(std::isfinite(g.data()[i]));
  const double lc = two_way_loss_classwise(x, y, 1.0);
  CHECK(std::isfinite(lc));

  // float instantiation stays finite too
  const Mat<float> xf = x.cast<float>();
  CHECK(std::isfinite(two_way_loss(xf, y, 1.0f)));
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(2004);
  SUBCASE("two-way row-wise") {
    for (int iter = 0; iter < 20; ++iter) {
      const int s = 1 + rng.next_int(6), c = 2 + rng.next_int(5);
      auto x = random_mat<double>(s, c, rng, -4.0, 4.0);
      const auto y = random_labels(s, c, rng, 0.4);
      const double gamma = 0.5 + rng.next_unit() * 2.0;
      Mat<double> g;
      two_way_loss(x, y, gamma, &g);
      const double worst = fd_max_rel_err(
          x.data(), g.data(), x.size(), [&] { return two_way_loss(x, y, gamma); }, rng);
      CHECK(worst < 1e-4);
    }
  }
  SUBCASE("two-way column-wise") {
    for (int iter = 0; iter < 10; ++iter) {
      const int s = 2 + rng.next_int(5), c = 2 + rng.next_int(5);
      auto x = random_mat<double>(s, c, rng, -4.0, 4.0);
      const auto y = random_labels(s, c, rng, 0.4);
      Mat<double> g;
      two_way_loss_classwise(x, y, 1.3, &g);
      const double worst = fd_max_rel_err(
          x.data(), g.data(), x.size(), [&] { return two_way_loss_classwise(x, y, 1.3); }, rng);
      CHECK(worst < 1e-4);
    }
  }
  SUBCASE("presence BCE on probabilities") {
    for (int iter = 0; iter < 10; ++iter) {
      auto p = random_mat<double>(3, 5, rng, 0.05, 0.95);
      const auto h = random_labels(3, 5, rng, 0.5);
      Mat<double> g;
      bce_prob_loss(p, h, &g);
      const double worst = fd_max_rel_err(
          p.data(), g.data(), p.size(), [&] { return bce_prob_loss(p, h); }, rng);
      CHECK(worst < 1e-4);
    }
  }
  SUBCASE("logit BCE") {
    for (int iter = 0; iter < 10; ++iter) {
      auto x = random_mat<double>(3, 5, rng, -4.0, 4.0);
      const auto y = random_labels(3, 5, rng, 0.5);
      Mat<double> g;
      bce_logit_loss(x, y, &g);
      const double worst = fd_max_rel_err(
          x.data(), g.data(), x.size(), [&] { return bce_logit_loss(x, y); }, rng);
      CHECK(worst < 1e-4);
    }
  }
  SUBCASE("combined frame objective") {
    for (int iter = 0; iter < 10; ++iter) {
      const int s = 2 + rng.next_int(5), c = 2 + rng.next_int(4);
      auto x = random_mat<double>(s, c, rng, -4.0, 4.0);
      const auto y = random_labels(s, c, rng, 0.4);
      Mat<double> g;
      combined_score_loss<double>(x, y, 1.0, 1.5, 0.7, LossMode::kTwoWay, nullptr, nullptr, &g);
      const double worst = fd_max_rel_err(
          x.data(), g.data(), x.size(),
          [&] { return combined_score_loss(x, y, 1.0, 1.5, 0.7, LossMode::kTwoWay); }, rng);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("invalid arguments are rejected") {
  Mat<double> x(2, 3);
  Mat<uint8_t> y(3, 2);
  CHECK_THROWS_AS(two_way_loss(x, y, 1.0), std::invalid_argument);
  Mat<uint8_t> y2(2, 3);
  CHECK_THROWS_AS(two_way_loss(x, y2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(two_way_loss(x, y2, -1.0), std::invalid_argument);
  Mat<double> p(2, 3);
  CHECK_THROWS_AS(bce_prob_loss(p, y), std::invalid_argument);
}

TEST_CASE("weighted total composes exactly and rejects non-finite parts") {
  LossWeights w;
  const auto b = combine_losses(0.1, 0.2, 0.3, 0.4, 0.5, w);
  CHECK(b.total == doctest::Approx(1.5).epsilon(1e-12));

  LossWeights w2;
  w2.beta2 = 0.0;
  w2.beta3 = 0.0;
  w2.beta1 = 2.0;
  const auto b2 = combine_losses(0.7, 9.0, 9.0, 9.0, 9.0, w2);
  CHECK(b2.total == doctest::Approx(1.4).epsilon(1e-12));

  CHECK_THROWS_AS(
      combine_losses(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, 0.0, 0.0, w),
      numeric_error);
  CHECK_THROWS_AS(combine_losses(0.0, std::numeric_limits<double>::infinity(), 0.0, 0.0, 0.0, w),
                  numeric_error);
}

TEST_CASE("loss mode and weight plumbing") {
  CHECK(loss_mode_from_string("two_way") == LossMode::kTwoWay);
  CHECK(loss_mode_from_string("bce") == LossMode::kBce);
  CHECK_THROWS_AS(loss_mode_from_string("focal"), std::invalid_argument);
  CHECK(to_string(LossMode::kTwoWay) == "two_way");

  // bce mode routes the combined objective through the logit BCE
  Rng rng(2005);
  const auto x = random_mat<double>(3, 4, rng);
  const auto y = random_labels(3, 4, rng, 0.5);
  double sample = -1.0, cls = -1.0;
  const double l = combined_score_loss(x, y, 1.0, 1.0, 1.0, LossMode::kBce, &sample, &cls);
  CHECK(l == doctest::Approx(bce_logit_loss(x, y)).epsilon(1e-12));
  CHECK(cls == 0.0);
  CHECK(sample == l);
}
