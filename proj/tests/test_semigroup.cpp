#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "carre/carre.hpp"
#include "testutil.hpp"

using namespace carre;

TEST_CASE("time grids validate monotonicity") {
  REQUIRE_THROWS_AS(TimeGrid::from_points({1.0, 1.0}), Error);
  REQUIRE_THROWS_AS(TimeGrid::from_points({-1.0, 1.0}), Error);
  REQUIRE_THROWS_AS(TimeGrid::from_points({}), Error);
  const auto lin = TimeGrid::linear(0.0, 1.0, 11);
  REQUIRE(lin.size() == 11);
  REQUIRE(lin[5] == Catch::Approx(0.5));
  const auto geo = TimeGrid::geometric(0.01, 20.0, 60);
  REQUIRE(geo.front() == Catch::Approx(0.01));
  REQUIRE(geo.back() == Catch::Approx(20.0));
}

TEST_CASE("expm at time zero is the identity") {
  const auto a = loop_chain(2.0, 3.0, 4.0);
  const auto p = expm(a, 0.0);
  REQUIRE(p.matrix() == Mat<double>::Identity(3, 3));
}

TEST_CASE("expm of the null generator is the identity") {
  const auto zero = validate_generator(Mat<double>(Mat<double>::Zero(3, 3)), 1e-12);
  const auto p = expm(zero, 7.5);
  REQUIRE(opnorm_inf(Mat<double>(p.matrix() - Mat<double>::Identity(3, 3))) < 1e-14);
}

TEST_CASE("expm rejects negative times") {
  const auto a = loop_chain(1.0, 1.0, 1.0);
  REQUIRE_THROWS_AS(expm(a, -0.1), NegativeTimeError);
}

TEST_CASE("rows of expm converge to the stationary measure") {
  const auto a = loop_chain(1.0, 1.0, 1.0);
  const auto p = expm(a, 50.0);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j)
      REQUIRE(p.matrix()(i, j) == Catch::Approx(1.0 / 3.0).margin(1e-10));
}

TEST_CASE("defective generator falls back to Pade and matches the Erlang form") {
  // 0 -> 1 -> 2 chain with an absorbing tail state; the -1 eigenvalue is
  // defective, which rules out the eigendecomposition route.
  Mat<double> q(3, 3);
  q << -1, 1, 0, 0, -1, 1, 0, 0, 0;
  const auto a = validate_generator(q, 1e-12);

  detail::SemigroupEvaluator eval(a);
  REQUIRE_FALSE(eval.eigen_route());

  const double t = 0.8;
  const auto p = expm(a, t);
  const double e = std::exp(-t);
  REQUIRE(p.matrix()(0, 0) == Catch::Approx(e).epsilon(1e-12));
  REQUIRE(p.matrix()(0, 1) == Catch::Approx(t * e).epsilon(1e-12));
  REQUIRE(p.matrix()(0, 2) == Catch::Approx(1.0 - e - t * e).epsilon(1e-12));
  REQUIRE(p.matrix()(1, 1) == Catch::Approx(e).epsilon(1e-12));
  REQUIRE(p.matrix()(1, 2) == Catch::Approx(1.0 - e).epsilon(1e-12));
  REQUIRE(p.matrix()(2, 2) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("semigroup law on random generators") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> time(0.0, 5.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = random_generator(2 + trial % 5, 100 + trial, 0.5);
    const double s = time(rng), t = time(rng);
    const Mat<double> lhs = expm(a, s).matrix() * expm(a, t).matrix();
    const Mat<double> rhs = expm(a, s + t).matrix();
    const double tol = 1e-9 * (a.norm() * (s + t) + 1.0);
    REQUIRE(opnorm_inf(Mat<double>(lhs - rhs)) <= tol);
  }
}

TEST_CASE("positivity, contraction and mass duality") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> time(0.0, 5.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = random_generator(2 + trial % 5, 200 + trial, 0.5);
    const auto mu = stationary_measure(a);
    const double t = time(rng);
    const auto p = expm(a, t);

    Vec<double> g = testutil::random_vector(rng, a.dim());
    const Vec<double> pg = p.apply(g);

    // contraction in sup norm
    REQUIRE(norm_sup(pg) <= norm_sup(g) * (1.0 + 1e-12));

    // mass duality <Pg, mu> = <g, mu>
    const double before = g.dot(mu.weights());
    const double after = pg.dot(mu.weights());
    REQUIRE(after == Catch::Approx(before).epsilon(1e-10));

    // positivity preservation
    const Vec<double> nonneg = g.cwiseAbs();
    const Vec<double> image = p.apply(nonneg);
    REQUIRE(image.minCoeff() >= -1e-12 * norm_sup(nonneg));
  }
}

TEST_CASE("evolve fixes constants and projects onto the stationary average") {
  const auto a = loop_chain(1.0, 1.0, 1.0);
  const auto grid = TimeGrid::from_points({0.0, 0.5, 1.0, 30.0});

  const Vec<double> ones = Vec<double>::Ones(3);
  for (const auto& state : evolve(a, ones, grid))
    for (Index i = 0; i < 3; ++i)
      REQUIRE(state(i) == Catch::Approx(1.0).epsilon(1e-12));

  Vec<double> basis0(3);
  basis0 << 1, 0, 0;
  const auto states = evolve(a, basis0, grid);
  for (Index i = 0; i < 3; ++i)
    REQUIRE(states.back()(i) == Catch::Approx(1.0 / 3.0).margin(1e-10));
}

TEST_CASE("evolve under the null generator freezes the state") {
  const auto zero = validate_generator(Mat<double>(Mat<double>::Zero(4, 4)), 1e-12);
  std::mt19937_64 rng(17);
  const Vec<double> g0 = testutil::random_vector(rng, 4);
  for (const auto& state : evolve(zero, g0, TimeGrid::linear(0.0, 3.0, 7)))
    REQUIRE(norm_sup(Vec<double>(state - g0)) < 1e-13);
}

TEST_CASE("check_markov reports entries and row sums") {
  const auto id = Mat<double>::Identity(3, 3);
  const auto rep = check_markov(Mat<double>(id), 1e-9);
  REQUIRE(rep.pass);
  REQUIRE(rep.min_entry == 0.0);
  REQUIRE(rep.max_row_sum_defect == 0.0);

  const auto p = expm(loop_chain(4.0, 1.0, 1.0), 0.37);
  REQUIRE(check_markov(p.matrix(), 1e-9).pass);

  Mat<double> bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  const auto bad_rep = check_markov(bad, 1e-9);
  REQUIRE_FALSE(bad_rep.pass);
  REQUIRE(bad_rep.max_row_sum_defect == Catch::Approx(0.1));
}

TEST_CASE("jensen defect vanishes for the identity and for constants") {
  std::mt19937_64 rng(19);
  const auto id = MarkovOperator<double>::identity(4);
  const Vec<double> g = testutil::random_vector(rng, 4);
  REQUIRE(jensen_check(id, g) == 0.0);

  const auto m = testutil::random_markov(rng, 4);
  const Vec<double> ones = Vec<double>::Ones(4);
  REQUIRE(std::abs(jensen_check(m, ones)) < 1e-15);
}

TEST_CASE("jensen inequality on random pairs") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index m = 2 + trial % 5;
    const auto op = testutil::random_markov(rng, m);
    const Vec<double> g = testutil::random_vector(rng, m);
    const double sup = norm_sup(g);
    REQUIRE(jensen_check(op, g) >= -1e-12 * sup * sup);
  }
}

TEST_CASE("certified operators clamp and renormalize") {
  Mat<double> near(2, 2);
  near << 1.0 + 5e-10, -5e-10, 0.25, 0.75;
  const auto op = MarkovOperator<double>::certify(near, 1e-9);
  REQUIRE(op.matrix().minCoeff() >= 0.0);
  for (Index i = 0; i < 2; ++i)
    REQUIRE(op.matrix().row(i).sum() == Catch::Approx(1.0).epsilon(1e-15));

  Mat<double> far(2, 2);
  far << 1.1, -0.1, 0.5, 0.5;
  REQUIRE_THROWS_AS(MarkovOperator<double>::certify(far, 1e-9), Error);
}
