#include <cmath>

#include <doctest.h>

#include "buzz/errors.hpp"
#include "buzz/metrics.hpp"
#include "buzz/rng.hpp"
#include "oracles.hpp"

using namespace buzz;

TEST_CASE("rmse basics") {
    std::vector<double> t{3.0, 4.0};
    std::vector<double> zeros{0.0, 0.0};
    CHECK(rmse(t, t) == 0.0);
    CHECK(rmse(zeros, t) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));

    std::vector<double> shifted{3.5, 4.5};
    CHECK(rmse(shifted, t) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), DataError);
    const std::vector<double> none;
    CHECK_THROWS_AS(rmse(none, none), DataError);
}

TEST_CASE("mae basics") {
    std::vector<double> t{3.0, 4.0};
    CHECK(mae(t, t) == 0.0);
    CHECK(mae({0.0, 0.0}, {3.0, 4.0}) == doctest::Approx(3.5).epsilon(1e-12));

    // n=1 makes rmse and mae coincide
    CHECK(mae({2.0}, {5.0}) == doctest::Approx(3.0));
    CHECK(rmse({2.0}, {5.0}) == doctest::Approx(3.0));
}

TEST_CASE("spearman hand cases") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}).value == doctest::Approx(1.0));
    CHECK(spearman({4, 3, 2, 1}, {10, 20, 30, 40}).value == doctest::Approx(-1.0));

    // ties in truth: ranks [1, 2.5, 2.5, 4] -> 4.5/sqrt(4.5*5)
    SpearmanResult r = spearman({1, 2, 3, 4}, {1, 2, 2, 3});
    CHECK(r.value == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(0.94868).epsilon(1e-4));
    CHECK_FALSE(r.degenerate);

    SpearmanResult degen = spearman({1, 1, 1}, {1, 2, 3});
    CHECK(degen.value == 0.0);
    CHECK(degen.degenerate);

    CHECK_THROWS_AS(spearman({1.0}, {1.0}), DataError);
}

TEST_CASE("metrics agree with brute-force oracles, tie-heavy included") {
    Rng rng(20240901);
    int tie_instances = 0;
    for (int iter = 0; iter < 100; ++iter) {
        const int n = 2 + static_cast<int>(rng.next_below(49));
        const bool tie_heavy = iter % 3 == 0;
        std::vector<double> p(static_cast<size_t>(n)), t(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            if (tie_heavy) {
                p[static_cast<size_t>(i)] = static_cast<double>(rng.next_below(4));
                t[static_cast<size_t>(i)] = static_cast<double>(rng.next_below(4));
            } else {
                p[static_cast<size_t>(i)] = rng.next_real(-10, 10);
                t[static_cast<size_t>(i)] = rng.next_real(-10, 10);
            }
        }
        if (tie_heavy) ++tie_instances;
        CHECK(rmse(p, t) == doctest::Approx(test::oracle::rmse(p, t)).epsilon(1e-12));
        CHECK(mae(p, t) == doctest::Approx(test::oracle::mae(p, t)).epsilon(1e-12));
        const double got = spearman(p, t).value;
        const double want = test::oracle::spearman(p, t);
        CHECK(std::abs(got - want) < 1e-9);
    }
    CHECK(tie_instances >= 30);
}

TEST_CASE("rmse >= mae always; equality iff equal magnitudes") {
    Rng rng(77);
    for (int iter = 0; iter < 200; ++iter) {
        const int n = 1 + static_cast<int>(rng.next_below(30));
        std::vector<double> p(static_cast<size_t>(n)), t(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            p[static_cast<size_t>(i)] = rng.next_real(-5, 5);
            t[static_cast<size_t>(i)] = rng.next_real(-5, 5);
        }
        CHECK(rmse(p, t) >= mae(p, t) - 1e-12);
    }
    // equal |error| everywhere -> equality
    std::vector<double> p{1.0, -1.0, 3.0};
    std::vector<double> t{0.0, 0.0, 2.0};
    CHECK(rmse(p, t) == doctest::Approx(mae(p, t)).epsilon(1e-12));
}

TEST_CASE("spearman invariant under strictly increasing transforms") {
    Rng rng(4242);
    for (int iter = 0; iter < 50; ++iter) {
        const int n = 3 + static_cast<int>(rng.next_below(20));
        std::vector<double> p(static_cast<size_t>(n)), t(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            p[static_cast<size_t>(i)] = rng.next_real(-4, 4);
            t[static_cast<size_t>(i)] = rng.next_real(-4, 4);
        }
        const double base = spearman(p, t).value;
        std::vector<double> affine(p), cubed(p), exped(p);
        for (auto& v : affine) v = 2.0 * v + 1.0;
        for (auto& v : cubed) v = v * v * v;
        for (auto& v : exped) v = std::exp(v);
        CHECK(spearman(affine, t).value == base);
        CHECK(spearman(cubed, t).value == base);
        CHECK(spearman(exped, t).value == base);
        // symmetry
        CHECK(spearman(p, t).value == doctest::Approx(spearman(t, p).value).epsilon(1e-12));
    }
}

TEST_CASE("relative improvement reproduces published arithmetic") {
    CHECK(relative_improvement(1.035, 1.018, Direction::LowerBetter) ==
          doctest::Approx(1.64).epsilon(0.01));
    CHECK(relative_improvement(0.332, 0.387, Direction::HigherBetter) ==
          doctest::Approx(16.57).epsilon(0.01));
    CHECK(relative_improvement(1.0, 1.0, Direction::LowerBetter) == 0.0);
    // regressions come out negative rather than being suppressed
    CHECK(relative_improvement(1.053, 1.063, Direction::LowerBetter) < 0.0);
    CHECK_THROWS_AS(relative_improvement(0.0, 1.0, Direction::LowerBetter), DataError);
}

TEST_CASE("evaluate_predictions carries failures and degeneracy") {
    EvalResult r = evaluate_predictions({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, 2);
    CHECK(r.n == 3);
    CHECK(r.failures == 2);
    CHECK(r.rmse == 0.0);
    CHECK(r.src == doctest::Approx(1.0));

    EvalResult empty = evaluate_predictions({}, {}, 5);
    CHECK(empty.n == 0);
    CHECK(empty.failures == 5);
    CHECK(std::isnan(empty.rmse));
}
