#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "carre/carre.hpp"
#include "testutil.hpp"

using namespace carre;

namespace {

/// Independent jump-form oracle: Gamma_1(g)_i = sum_{j != i} q_ij (g_j - g_i)^2.
Vec<double> gamma1_jump_form(const Generator<double>& a, const Vec<double>& g) {
  const Index m = a.dim();
  Vec<double> out = Vec<double>::Zero(m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      if (j == i) continue;
      const double d = g(j) - g(i);
      out(i) += a.matrix()(i, j) * d * d;
    }
  return out;
}

}  // namespace

TEST_CASE("gamma_0 is the pointwise product") {
  std::mt19937_64 rng(3);
  const auto a = random_generator(4, 5, 0.7);
  const Vec<double> f = testutil::random_vector(rng, 4);
  const Vec<double> g = testutil::random_vector(rng, 4);
  REQUIRE(gamma_n(a, 0, f, g) == Vec<double>(f.cwiseProduct(g)));
}

TEST_CASE("gamma_n kills constants exactly") {
  const Vec<double> ones = Vec<double>::Ones(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_generator(5, 300 + trial, 0.6);
    for (int n = 1; n <= 4; ++n) {
      const Vec<double> gam = gamma_n(a, n, ones, ones);
      for (Index i = 0; i < 5; ++i) REQUIRE(gam(i) == 0.0);
    }
  }
}

TEST_CASE("gamma_1 on the unit loop hits the frozen value (1,0,1)") {
  const auto a = loop_chain(1.0, 1.0, 1.0);
  Vec<double> g(3);
  g << 1, 0, 0;
  const Vec<double> gam = gamma_n(a, 1, g, g);
  REQUIRE(gam(0) == Catch::Approx(1.0).epsilon(1e-14));
  REQUIRE(gam(1) == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(gam(2) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gamma_1 agrees with the jump form on random instances") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const Index m = 2 + trial % 5;
    const auto a = random_generator(m, 400 + trial, 0.6);
    const Vec<double> g = testutil::random_vector(rng, m);
    const Vec<double> via_recursion = gamma_n(a, 1, g, g);
    const Vec<double> via_jumps = gamma1_jump_form(a, g);
    const double scale = norm_sup(g) * norm_sup(g) * a.norm() + 1e-30;
    REQUIRE(norm_sup(Vec<double>(via_recursion - via_jumps)) <= 1e-12 * scale);
  }
}

TEST_CASE("explicit gamma reproduces the displayed low orders") {
  std::mt19937_64 rng(37);
  const auto a = random_generator(4, 11, 0.8);
  const Vec<double> f = testutil::random_vector(rng, 4);
  const Vec<double> g = testutil::random_vector(rng, 4);

  // Gamma_1 = A(fg) - f.Ag - g.Af
  const Vec<double> af = a.apply(f), ag = a.apply(g);
  const Vec<double> gamma1 = a.apply(Vec<double>(f.cwiseProduct(g))) -
                             Vec<double>(f.cwiseProduct(ag)) -
                             Vec<double>(g.cwiseProduct(af));
  REQUIRE(norm_sup(Vec<double>(gamma_n_explicit(a, 1, f, g) - gamma1)) < 1e-13);

  // Gamma_2 = A^2(fg) - 2A(f.Ag) - 2A(g.Af) + g.A^2f + 2Ag.Af + f.A^2g
  const Vec<double> a2f = a.apply(af), a2g = a.apply(ag);
  const Vec<double> gamma2 =
      a.apply(a.apply(Vec<double>(f.cwiseProduct(g)))) -
      2.0 * a.apply(Vec<double>(f.cwiseProduct(ag))) -
      2.0 * a.apply(Vec<double>(g.cwiseProduct(af))) +
      Vec<double>(g.cwiseProduct(a2f)) + 2.0 * Vec<double>(ag.cwiseProduct(af)) +
      Vec<double>(f.cwiseProduct(a2g));
  const double scale = norm_sup(f) * norm_sup(g) * a.norm() * a.norm() + 1e-30;
  REQUIRE(norm_sup(Vec<double>(gamma_n_explicit(a, 2, f, g) - gamma2)) <=
          1e-13 * scale);
}

TEST_CASE("recursion and explicit form agree up to order five") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 2 + trial % 5;
    const auto a = random_generator(m, 500 + trial, 0.7);
    const Vec<double> f = testutil::random_vector(rng, m);
    const Vec<double> g = testutil::random_vector(rng, m);
    for (int n = 0; n <= 5; ++n) {
      const Vec<double> lhs = gamma_n(a, n, f, g);
      const Vec<double> rhs = gamma_n_explicit(a, n, f, g);
      const double scale =
          norm_sup(f) * norm_sup(g) * std::pow(a.norm(), n) + 1e-30;
      REQUIRE(norm_sup(Vec<double>(lhs - rhs)) <= 1e-10 * scale);
    }
  }
}

TEST_CASE("recursion and explicit form coincide exactly over rationals") {
  const auto a = loop_chain<Rational>(Rational(4), Rational(1), Rational(1));
  Vec<Rational> f(3), g(3);
  f << Rational(1), Rational(1, 2), Rational(-2);
  g << Rational(0), Rational(2), Rational(1, 3);
  for (int n = 0; n <= 5; ++n) {
    const Vec<Rational> lhs = gamma_n(a, n, f, g);
    const Vec<Rational> rhs = gamma_n_explicit(a, n, f, g);
    for (Index i = 0; i < 3; ++i) REQUIRE(lhs(i) == rhs(i));
  }
}

TEST_CASE("gamma is bilinear and exactly symmetric") {
  std::mt19937_64 rng(43);
  const auto a = random_generator(5, 601, 0.6);
  const Vec<double> f = testutil::random_vector(rng, 5);
  const Vec<double> g = testutil::random_vector(rng, 5);
  const Vec<double> h = testutil::random_vector(rng, 5);

  for (int n = 1; n <= 4; ++n) {
    // exact symmetry: the kernel evaluates both orders the same way
    REQUIRE(gamma_n(a, n, f, g) == gamma_n(a, n, g, f));

    const double alpha = 0.37, beta = -1.25;
    const Vec<double> combo = alpha * f + beta * h;
    const Vec<double> lhs = gamma_n(a, n, combo, g);
    const Vec<double> rhs =
        alpha * gamma_n(a, n, f, g) + beta * gamma_n(a, n, h, g);
    const double scale = (norm_sup(f) + norm_sup(h)) * norm_sup(g) *
                             std::pow(a.norm(), n) +
                         1e-30;
    REQUIRE(norm_sup(Vec<double>(lhs - rhs)) <= 1e-11 * scale);
  }
}

TEST_CASE("diagonal positivity of gamma_n on random generators") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 2 + trial % 5;
    const auto a = random_generator(m, 700 + trial, 0.5);
    const Vec<double> g = testutil::random_vector(rng, m);
    const double g_scale = norm_sup(g);
    for (int n = 1; n <= 4; ++n) {
      const Vec<double> gam = gamma_n(a, n, g, g);
      const double floor = -1e-9 * g_scale * g_scale * std::pow(a.norm(), n);
      REQUIRE(gam.minCoeff() >= floor);
    }
  }
}

TEST_CASE("big_g base cases") {
  std::mt19937_64 rng(53);
  const Vec<double> f = testutil::random_vector(rng, 4);
  const Vec<double> g = testutil::random_vector(rng, 4);

  // empty list gives the pointwise product
  const std::vector<MarkovOperator<double>> none;
  REQUIRE(big_g(none, f, g) == Vec<double>(f.cwiseProduct(g)));

  // G_1(M, g) = Mg^2 - (Mg)^2, nonnegative, and matches jensen_check
  const auto m = testutil::random_markov(rng, 4);
  const std::vector<MarkovOperator<double>> one{m};
  const Vec<double> g1 = big_g(one, g, g);
  const Vec<double> direct =
      m.apply(Vec<double>(g.cwiseProduct(g))) -
      Vec<double>(m.apply(g).cwiseProduct(m.apply(g)));
  REQUIRE(norm_sup(Vec<double>(g1 - direct)) < 1e-14);
  REQUIRE(g1.minCoeff() >= -1e-14);
  REQUIRE(g1.minCoeff() == Catch::Approx(jensen_check(m, g)).margin(1e-15));
}

TEST_CASE("identity operators cancel every difference") {
  std::mt19937_64 rng(59);
  const Vec<double> f = testutil::random_vector(rng, 3);
  const Vec<double> g = testutil::random_vector(rng, 3);
  for (std::size_t depth = 1; depth <= 4; ++depth) {
    const std::vector<MarkovOperator<double>> ids(
        depth, MarkovOperator<double>::identity(3));
    REQUIRE(norm_sup(big_g(ids, f, g)) == 0.0);
  }
}

TEST_CASE("big_g depth two matches the displayed four-term formula") {
  std::mt19937_64 rng(61);
  const auto m1 = testutil::random_markov(rng, 5);
  const auto m2 = testutil::random_markov(rng, 5);
  const Vec<double> f = testutil::random_vector(rng, 5);
  const Vec<double> g = testutil::random_vector(rng, 5);

  // G_2(M2,M1,f,g) = M2 M1(fg) - M2(M1f.M1g) - M1(M2f.M2g) + (M1M2f).(M1M2g)
  const Vec<double> term1 = m2.apply(m1.apply(Vec<double>(f.cwiseProduct(g))));
  const Vec<double> term2 =
      m2.apply(Vec<double>(m1.apply(f).cwiseProduct(m1.apply(g))));
  const Vec<double> term3 =
      m1.apply(Vec<double>(m2.apply(f).cwiseProduct(m2.apply(g))));
  const Vec<double> term4 =
      Vec<double>(m1.apply(m2.apply(f)).cwiseProduct(m1.apply(m2.apply(g))));
  const Vec<double> direct = term1 - term2 - term3 + term4;

  const std::vector<MarkovOperator<double>> ops{m2, m1};
  REQUIRE(norm_sup(Vec<double>(big_g(ops, f, g) - direct)) < 1e-13);
}

TEST_CASE("interpolant endpoints collapse to gamma and big_g") {
  std::mt19937_64 rng(67);
  const auto a = loop_chain(2.0, 1.0, 0.5);
  const Vec<double> f = testutil::random_vector(rng, 3);
  const Vec<double> g = testutil::random_vector(rng, 3);

  const std::vector<MarkovOperator<double>> none;
  for (int n = 0; n <= 4; ++n)
    REQUIRE(big_g_interp(a, none, n, n, f, g) == gamma_n(a, n, f, g));

  const std::vector<MarkovOperator<double>> ops{expm(a, 0.3), expm(a, 0.9),
                                                expm(a, 1.6)};
  REQUIRE(big_g_interp(a, ops, 3, 0, f, g) == big_g(ops, f, g));
}

TEST_CASE("interpolant rejects wrong list lengths and non-commuting operators") {
  std::mt19937_64 rng(71);
  const auto a = loop_chain(1.0, 2.0, 3.0);
  const Vec<double> g = testutil::random_vector(rng, 3);
  const std::vector<MarkovOperator<double>> ops{expm(a, 0.4)};

  REQUIRE_THROWS_AS(big_g_interp(a, ops, 3, 1, g, g), DimensionMismatchError);

  const std::vector<MarkovOperator<double>> alien{testutil::random_markov(rng, 3)};
  REQUIRE_THROWS_AS(big_g_interp(a, alien, 2, 1, g, g), NonCommutingError);
  // k = 0 never applies the generator, so no commutation requirement
  REQUIRE_NOTHROW(big_g_interp(a, alien, 1, 0, g, g));
}

TEST_CASE("interpolant diagonal positivity with semigroup operators") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_generator(3 + trial % 3, 800 + trial, 0.6);
    Vec<double> g = testutil::random_vector(rng, a.dim());
    g /= norm_sup(g);
    const std::vector<MarkovOperator<double>> ops{expm(a, 0.5)};
    const Vec<double> val = big_g_interp(a, ops, 2, 1, g, g);
    REQUIRE(val.minCoeff() >= -1e-10 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("interpolant positivity is exact in rational arithmetic") {
  const auto a = loop_chain<Rational>(Rational(4), Rational(1), Rational(1));
  const auto m = testutil::jacobi_markov<Rational>(a, Rational(8));
  Vec<Rational> g(3);
  g << Rational(3), Rational(-1, 2), Rational(2, 7);
  const std::vector<MarkovOperator<Rational>> ops{m};
  const Vec<Rational> val = big_g_interp(a, ops, 2, 1, g, g);
  for (Index i = 0; i < 3; ++i) REQUIRE(val(i) >= Rational(0));
}

TEST_CASE("decomposition lemma with a commuting operator") {
  std::mt19937_64 rng(79);
  const auto a = loop_chain(1.0, 1.0, 1.0);
  const Vec<double> f = testutil::random_vector(rng, 3);
  const Vec<double> g = testutil::random_vector(rng, 3);
  const auto m = expm(a, 0.7);

  // G_2^1(M, f, g) = M Gamma_1(f,g) - Gamma_1(Mf, Mg)
  const std::vector<MarkovOperator<double>> ops{m};
  const Vec<double> lhs = big_g_interp(a, ops, 2, 1, f, g);
  const Vec<double> rhs =
      m.apply(gamma_n(a, 1, f, g)) -
      gamma_n(a, 1, Vec<double>(m.apply(f)), Vec<double>(m.apply(g)));
  const double scale = norm_sup(f) * norm_sup(g) * a.norm() + 1e-30;
  REQUIRE(norm_sup(Vec<double>(lhs - rhs)) <= 1e-12 * scale);
}

TEST_CASE("parallelogram identity at every depth") {
  std::mt19937_64 rng(83);
  SECTION("degenerate pairs have zero defect") {
    const Vec<double> g = testutil::random_vector(rng, 4);
    const std::vector<MarkovOperator<double>> ops{testutil::random_markov(rng, 4),
                                                  testutil::random_markov(rng, 4)};
    REQUIRE(check_parallelogram(ops, g, g) < 1e-14);
    REQUIRE(check_parallelogram(ops, Vec<double>(-g), g) < 1e-14);
  }

  SECTION("random operator lists stay at roundoff") {
    for (int trial = 0; trial < 200; ++trial) {
      const Index m = 2 + trial % 4;
      std::vector<MarkovOperator<double>> ops;
      for (std::size_t d = 0; d < 1 + trial % 4; ++d)
        ops.push_back(testutil::random_markov(rng, m));
      const Vec<double> f = testutil::random_vector(rng, m);
      const Vec<double> g = testutil::random_vector(rng, m);
      const double scale =
          std::max(norm_sup(f), norm_sup(g)) * std::max(norm_sup(f), norm_sup(g));
      REQUIRE(check_parallelogram(ops, f, g) <= 1e-12 * scale);
    }
  }

  SECTION("exact equality over rationals") {
    const auto a = loop_chain<Rational>(Rational(2), Rational(3), Rational(5));
    std::vector<MarkovOperator<Rational>> ops{
        testutil::jacobi_markov<Rational>(a, Rational(5)),
        testutil::jacobi_markov<Rational>(a, Rational(10))};
    Vec<Rational> f(3), g(3);
    f << Rational(1), Rational(-2, 3), Rational(4);
    g << Rational(0), Rational(1, 5), Rational(-1);
    REQUIRE(check_parallelogram(ops, f, g) == Rational(0));
  }
}

TEST_CASE("convexity link: midpoint value below the average") {
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 2 + trial % 4;
    std::vector<MarkovOperator<double>> ops;
    for (std::size_t d = 0; d < 1 + trial % 3; ++d)
      ops.push_back(testutil::random_markov(rng, m));
    const Vec<double> f = testutil::random_vector(rng, m);
    const Vec<double> g = testutil::random_vector(rng, m);
    const Vec<double> mid = (f + g) / 2.0;
    const Vec<double> gap = (big_g(ops, f, f) + big_g(ops, g, g)) / 2.0 -
                            big_g(ops, mid, mid);
    REQUIRE(gap.minCoeff() >= -1e-12 * std::max(1.0, norm_sup(f) * norm_sup(g)));
  }
}

TEST_CASE("rescaled limit converges at first order") {
  std::mt19937_64 rng(97);
  const auto a = loop_chain(1.0, 1.0, 1.0);
  const Vec<double> f = testutil::random_vector(rng, 3);
  const Vec<double> g = testutil::random_vector(rng, 3);

  std::vector<double> ts;
  for (int j = 3; j <= 12; ++j) ts.push_back(std::pow(2.0, -j));

  SECTION("n=1, k=0: toward Gamma_1") {
    const auto rep = check_rescaled_limit(a, {}, 1, 0, f, g, ts);
    REQUIRE(rep.order >= 0.9);
    // errors roughly halve as t halves
    for (std::size_t j = 1; j + 1 < rep.errors.size(); ++j)
      REQUIRE(rep.errors[j + 1] <= rep.errors[j] * 0.7);
  }

  SECTION("n=2, k=1 with a semigroup member") {
    const std::vector<MarkovOperator<double>> ops{expm(a, 1.0)};
    const auto rep = check_rescaled_limit(a, ops, 2, 1, f, g, ts);
    REQUIRE(rep.order >= 0.9);
  }

  SECTION("null generator: both sides vanish") {
    const auto zero =
        validate_generator(Mat<double>(Mat<double>::Zero(3, 3)), 1e-12);
    const auto rep = check_rescaled_limit(zero, {}, 1, 0, f, g, ts);
    REQUIRE(rep.all_zero);
    for (double e : rep.errors) REQUIRE(e <= 1e-12);
  }
}

TEST_CASE("rescaled limit validates the time sequence") {
  const auto a = loop_chain(1.0, 1.0, 1.0);
  Vec<double> g(3);
  g << 1, 0, 0;
  REQUIRE_THROWS_AS(check_rescaled_limit(a, {}, 1, 0, g, g, {0.5, 0.5}), Error);
  REQUIRE_THROWS_AS(check_rescaled_limit(a, {}, 1, 0, g, g, {0.25, 0.5}), Error);
  REQUIRE_THROWS_AS(check_rescaled_limit(a, {}, 1, 0, g, g, {0.5, -0.25}), Error);
}

TEST_CASE("product rule diagnostic stays small along the semigroup") {
  std::mt19937_64 rng(101);
  const auto a = loop_chain(1.0, 2.0, 1.5);
  const Vec<double> f = testutil::random_vector(rng, 3);
  const Vec<double> g = testutil::random_vector(rng, 3);
  for (int n = 0; n <= 2; ++n) {
    const double defect = product_rule_diagnostic(a, n, f, g, 1e-4);
    const double scale =
        norm_sup(f) * norm_sup(g) * std::pow(a.norm(), n + 1) + 1e-30;
    REQUIRE(defect <= 1e-6 * scale);
  }
}
