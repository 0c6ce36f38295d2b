#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <spectraforge/rng.hpp>

using spectraforge::Rng;

TEST_CASE("same seed reproduces the full draw sequence") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.uniform() == b.uniform());
        REQUIRE(a.normal() == b.normal());
        REQUIRE(a.below(97) == b.below(97));
    }
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
    Rng r(7);
    double lo = 1, hi = 0;
    for (int i = 0; i < 100000; ++i) {
        double v = r.uniform();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    REQUIRE(lo < 0.01);
    REQUIRE(hi > 0.99);
}

TEST_CASE("bounded uniform respects endpoints") {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) {
        double v = r.uniform(-2.5, 4.0);
        REQUIRE(v >= -2.5);
        REQUIRE(v < 4.0);
    }
}

TEST_CASE("below(n) is unbiased across small n") {
    Rng r(11);
    // chi-square against uniform over 10 buckets; 3 sigma bound per bucket
    const int n = 10, draws = 100000;
    std::vector<int> counts(n, 0);
    for (int i = 0; i < draws; ++i) counts[r.below(n)]++;
    const double expect = draws / double(n);
    const double sigma = std::sqrt(expect * (1 - 1.0 / n));
    for (int c : counts) REQUIRE(std::abs(c - expect) < 5 * sigma);
}

TEST_CASE("normal matches N(0,1) moments") {
    Rng r(5);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("shuffle produces a permutation, uniformly over positions") {
    Rng r(9);
    std::vector<int> base{0, 1, 2, 3, 4, 5, 6, 7};
    // permutation property
    for (int t = 0; t < 100; ++t) {
        auto v = base;
        r.shuffle(v);
        auto s = v;
        std::sort(s.begin(), s.end());
        REQUIRE(s == base);
    }
    // element 0 should land in every slot about equally often
    const int trials = 40000;
    std::vector<int> pos(base.size(), 0);
    for (int t = 0; t < trials; ++t) {
        auto v = base;
        r.shuffle(v);
        pos[static_cast<size_t>(
            std::find(v.begin(), v.end(), 0) - v.begin())]++;
    }
    const double expect = trials / double(base.size());
    for (int c : pos) REQUIRE(std::abs(c - expect) < 6 * std::sqrt(expect));
}

TEST_CASE("serialize round trip continues the identical stream") {
    Rng a(123);
    for (int i = 0; i < 57; ++i) a.uniform();
    std::string state = a.serialize();
    Rng b;
    b.deserialize(state);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.uniform() == b.uniform());
        REQUIRE(a.normal() == b.normal());
    }
}

TEST_CASE("fork yields decorrelated deterministic children") {
    Rng a(77), b(77);
    Rng c1 = a.fork(0);
    Rng c2 = b.fork(0);
    REQUIRE(c1.uniform() == c2.uniform());  // deterministic

    Rng p(77);
    Rng d1 = p.fork(1);
    Rng d2 = p.fork(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (d1.below(1000) == d2.below(1000)) ++same;
    REQUIRE(same < 10);  // distinct streams
}
