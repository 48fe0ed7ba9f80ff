#include <doctest.h>

#include <cmath>
#include <map>

#include <boost/multiprecision/cpp_int.hpp>

#include "oracles.hpp"
#include "towerprod/error.hpp"
#include "towerprod/tower.hpp"

using namespace towerprod;

TEST_CASE("building towers")
{
    const auto one = build_tower(TailSpec::explicit_values({1.0, 0.0}), 4);
    REQUIRE(one.size() == 1);
    CHECK(one.columns()[0] == Column{1, 1.0});
    CHECK(one.mean_return() == 1.0);

    const auto tf = build_tower(TailSpec::explicit_values({1.0, 1.0, 1.0, 0.5, 0.5, 0.0}), 8);
    REQUIRE(tf.size() == 2);
    CHECK(tf.columns()[0] == Column{3, 0.5});
    CHECK(tf.columns()[1] == Column{5, 0.5});
    CHECK(tf.mean_return() == 4.0);
    CHECK(tf.gcd() == 1);
    CHECK(tf.beta() == 0.5);
    CHECK(tf.distortion() == 0.0);

    const auto g = build_tower(TailSpec::exponential(std::log(2.0)), 30);
    REQUIRE(g.size() == 30);
    for (std::int64_t k = 1; k < 30; ++k)
        CHECK(g.columns()[static_cast<std::size_t>(k - 1)].p ==
              doctest::Approx(std::ldexp(1.0, -static_cast<int>(k))).epsilon(1e-14));
    CHECK(g.columns().back().p == doctest::Approx(std::ldexp(1.0, -29)).epsilon(1e-12));
    CHECK(g.leak() == doctest::Approx(std::ldexp(1.0, -30)).epsilon(1e-12));
    CHECK(g.mean_return() == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("construction errors")
{
    try {
        build_tower(TailSpec::exponential(0.01), 20, 1e-6);
        FAIL("expected TruncationTooLossy");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TruncationTooLossy);
    }
    try {
        TowerModel::from_columns({{2, 0.5}, {4, 0.5}});
        FAIL("expected AperiodicityViolated");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AperiodicityViolated);
        CHECK(e.value().value_or(0) == 2.0);
    }
    CHECK_THROWS_AS(TowerModel::from_columns({{3, 0.5}, {5, 0.4}}), Error);
    CHECK_THROWS_AS(TowerModel::from_columns({{0, 1.0}}), Error);
    CHECK_THROWS_AS(build_tower(TailSpec::exponential(1.0), 1), Error);
}

TEST_CASE("stepping and first hitting")
{
    const auto m = oracle::three_five();
    Rng rng = make_stream(1, 0);
    CHECK(step(m, {0, 0}, rng) == TowerState{0, 1});
    int to_three = 0;
    for (int i = 0; i < 4000; ++i) {
        const auto s = step(m, {0, 2}, rng);
        CHECK(s.level == 0);
        to_three += s.column == 0;
    }
    CHECK(std::abs(to_three - 2000) < 3 * std::sqrt(1000.0));
    const auto u = oracle::unit();
    CHECK(step(u, {0, 0}, rng) == TowerState{0, 0});

    CHECK(first_hitting(m, {1, 2}) == 3);
    CHECK(first_hitting(m, {1, 0}) == 0);
    CHECK(first_hitting(m, {0, 1}) == 2);

    // matches the number of simulated steps to the base
    for (int i = 0; i < 200; ++i) {
        TowerState s{static_cast<std::size_t>(i % 2), static_cast<std::int64_t>(i % 3)};
        const auto expect = first_hitting(m, s);
        std::int64_t steps = 0;
        while (s.level != 0 || steps == 0) {
            if (s.level == 0) break;
            s = step(m, s, rng);
            ++steps;
        }
        CHECK(steps == expect);
    }
}

TEST_CASE("renewal probabilities")
{
    const auto u1 = renewal_probabilities(oracle::unit(), 20);
    for (double v : u1) CHECK(v == 1.0);

    const auto ug = renewal_probabilities(oracle::geometric(64), 50);
    for (std::size_t n = 1; n < ug.size(); ++n) CHECK(ug[n] == doctest::Approx(0.5).epsilon(1e-15));

    const auto u = renewal_probabilities(oracle::three_five(), 40);
    CHECK(u[3] == 0.5);
    CHECK(u[4] == 0.0);
    CHECK(u[5] == 0.5);
    CHECK(u[6] == 0.25);
    CHECK(u[8] == 0.5);
    const auto occ = oracle::base_occupation(oracle::three_five(), 40);
    for (std::size_t n = 0; n < u.size(); ++n) CHECK(u[n] == doctest::Approx(occ[n]).epsilon(1e-14));
}

TEST_CASE("renewal limit on desk models")
{
    const std::vector<TowerModel> models{
        oracle::unit(), oracle::three_five(), oracle::geometric(64),
        TowerModel::from_columns({{2, 0.3}, {7, 0.7}}),
        build_tower(TailSpec::polynomial(3.0), 400),
        build_tower(TailSpec::stretched(1.0, 0.5), 400)};
    for (const auto& m : models) {
        REQUIRE(m.mean_return() <= 10.0);
        const auto u = renewal_probabilities(m, 10000);
        CHECK(std::fabs(u.back() - 1.0 / m.mean_return()) < 1e-6);
    }
}

TEST_CASE("mixing window")
{
    const auto w1 = select_n0(oracle::unit(), 0.5, 100);
    CHECK(w1.n0 == 1);
    CHECK(w1.c == 0.5);

    const auto wg = select_n0(oracle::geometric(64), 0.5, 200);
    CHECK(wg.n0 == 1);
    CHECK(wg.c == doctest::Approx(0.25).epsilon(1e-12));

    const auto m = oracle::three_five();
    const auto w = select_n0(m, 0.5, 200);
    CHECK(w.c == 0.125);
    CHECK(w.c_tower_normalized == doctest::Approx(0.125 / 4.0));
    const auto occ = oracle::base_occupation(m, 200);
    std::int64_t expect = 200;
    while (expect > 1 && occ[static_cast<std::size_t>(expect - 1)] >= 0.125) --expect;
    CHECK(w.n0 == expect);
    CHECK(w.n0 > 4);
    CHECK_THROWS_AS(select_n0(m, 0.5, 30), Error);
    CHECK_THROWS_AS(select_n0(m, 1.5, 200), Error);
}

TEST_CASE("invariant measure")
{
    const auto nu1 = invariant_measure(oracle::unit());
    CHECK(nu1 == std::vector<double>{1.0});

    const auto m = oracle::three_five();
    const auto nu = invariant_measure(m);
    REQUIRE(nu.size() == 8);
    for (double v : nu) CHECK(v == 0.125);
    CHECK(stationarity_residual(m, nu) < 1e-15);

    const auto g = oracle::geometric(30);
    const auto ng = invariant_measure(g);
    double total = 0.0;
    for (double v : ng) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ng[static_cast<std::size_t>(g.state_index(3, 2))] ==
          doctest::Approx(std::ldexp(1.0, -4) / 2.0).epsilon(1e-8));
    CHECK(stationarity_residual(g, ng) < 1e-12);

    // a perturbed measure is detected
    auto bad = nu;
    bad[2] += 1e-6;
    CHECK(stationarity_residual(m, bad) > 1e-7);
}

TEST_CASE("occupation frequencies of a long run match the invariant measure")
{
    const auto m = oracle::three_five();
    const auto nu = invariant_measure(m);
    std::vector<std::int64_t> visits(nu.size(), 0);
    Rng rng = make_stream(2024, 0);
    TowerState s{0, 0};
    const std::int64_t steps = 1000000;
    for (std::int64_t i = 0; i < steps; ++i) {
        s = step(m, s, rng);
        visits[static_cast<std::size_t>(m.state_index(s.column, s.level))]++;
    }
    for (std::size_t i = 0; i < nu.size(); ++i) {
        const double f = static_cast<double>(visits[i]) / steps;
        const double se = std::sqrt(nu[i] * (1 - nu[i]) / steps);
        CHECK(std::fabs(f - nu[i]) < 3 * se);
    }
}

TEST_CASE("cylinders")
{
    const auto m = oracle::three_five();
    const auto c1 = enumerate_cylinders(m, 1);
    REQUIRE(c1.size() == 2);
    for (const auto& c : c1) {
        CHECK(c.measure == 0.5);
        CHECK_FALSE(c.returns_to_base);
    }
    const auto c3 = enumerate_cylinders(m, 3);
    double back3 = 0.0;
    for (const auto& c : c3)
        if (c.returns_to_base) {
            CHECK(c.word == std::vector<std::size_t>{0});
            back3 += c.measure;
        }
    CHECK(back3 == 0.5);

    const auto c8 = enumerate_cylinders(m, 8);
    std::map<std::vector<std::size_t>, double> back;
    for (const auto& c : c8)
        if (c.returns_to_base) back[c.word] = c.measure;
    CHECK(back.size() == 2);
    CHECK(back[{0, 1}] == 0.25);
    CHECK(back[{1, 0}] == 0.25);

    CHECK_THROWS_AS(enumerate_cylinders(m, 30, {5, 1 << 20}), Error);
    CHECK_THROWS_AS(enumerate_cylinders(oracle::geometric(30), 30, {20, 1000}), Error);
}

TEST_CASE("cylinder returning mass equals the renewal sequence")
{
    using boost::multiprecision::cpp_rational;
    for (const auto& m : {oracle::three_five(), TowerModel::from_columns({{1, 0.25}, {2, 0.5}, {3, 0.25}})}) {
        const auto u = renewal_probabilities(m, 15);
        for (std::int64_t n = 1; n <= 15; ++n) {
            cpp_rational exact = 0;
            double total = 0.0;
            for (const auto& c : enumerate_cylinders(m, n)) {
                total += c.measure;
                if (!c.returns_to_base) continue;
                cpp_rational w = 1;
                std::int64_t len = 0;
                for (auto col : c.word) {
                    // dyadic probabilities are exact in binary
                    w *= cpp_rational(static_cast<long long>(m.columns()[col].p * 4), 4);
                    len += m.columns()[col].R;
                }
                CHECK(len == n);
                exact += w;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(static_cast<double>(exact) == u[static_cast<std::size_t>(n)]);
        }
    }
}

TEST_CASE("pushforward density")
{
    const auto d1 = pushforward_density_bound(oracle::unit(), 5);
    CHECK(d1.max_density == doctest::Approx(1.0));
    CHECK(d1.bound == 1.0);
    CHECK(d1.holds);

    const auto m = oracle::three_five();
    const auto d = pushforward_density_bound(m, 3);
    CHECK(d.bound == 4.0);
    CHECK(d.max_density <= 4.0 + 1e-12);
    CHECK(d.holds);

    const auto g = oracle::geometric(30);
    for (std::int64_t n : {1, 5, 20}) {
        const auto dg = pushforward_density_bound(g, n);
        CHECK(dg.holds);
        // the first level above the base carries twice its invariant share
        CHECK(dg.max_density == doctest::Approx(2.0).epsilon(1e-6));
    }
}

TEST_CASE("model summary")
{
    const auto m = oracle::three_five();
    const auto w = select_n0(m, 0.5, 200);
    const auto j = model_summary(m, w);
    CHECK(j["mean_return"] == 4.0);
    CHECK(j["gcd"] == 1);
    CHECK(j["columns"].size() == 2);
    CHECK(j["n0"] == w.n0);
    CHECK(j["c"] == 0.125);
    CHECK(j["c_tower_normalized"] == 0.125 / 4.0);
}
