// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

#include "cdca/models.hpp"
#include "cdca/uncertainty.hpp"

using namespace cdca;

namespace {

using Runs = std::vector<std::vector<double>>;

// Two-class runs whose class-0 probabilities are `p`.
Runs binary_runs(const std::vector<double>& p) {
    Runs r;
    for (double v : p) r.push_back({v, 1.0 - v});
    return r;
}

std::vector<double> random_simplex(std::size_t classes, Rng& rng) {
    std::vector<double> v(classes);
    double s = 0.0;
    for (double& x : v) {
        x = -std::log(1.0 - rng.uniform());
        s += x;
    }
    for (double& x : v) x /= s;
    return v;
}

// Independent oracle: long double sums and a one-pass E[x^2]-E[x]^2 form.
double oracle_std(const Runs& runs) {
    const std::size_t c = runs.front().size();
    std::size_t top = 0;
    long double best = -1;
    for (std::size_t k = 0; k < c; ++k) {
        long double m = 0;
        for (const auto& r : runs) m += r[k];
        if (m > best) {
            best = m;
            top = k;
        }
    }
    long double s = 0, s2 = 0;
    for (const auto& r : runs) {
        s += r[top];
        s2 += static_cast<long double>(r[top]) * r[top];
    }
    const long double n = static_cast<long double>(runs.size());
    const long double var = s2 / n - (s / n) * (s / n);
    return static_cast<double>(std::sqrt(std::max(var, 0.0L)));
}

} // namespace

TEST_CASE("score construction") {
    CHECK(UncertaintyScore(0.25).value() == 0.25);
    CHECK(UncertaintyScore(0.5 + 1e-13).value() == 0.5);
    CHECK_THROWS_AS(UncertaintyScore(-0.01), ParameterError);
    CHECK_THROWS_AS(UncertaintyScore(0.6), ParameterError);
    CHECK_THROWS_AS(UncertaintyScore(std::nan("")), ParameterError);
    CHECK(UncertaintyScore(0.1) < UncertaintyScore(0.2));
}

TEST_CASE("v_unc examples") {
    CHECK(v_unc({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}}).value() == 0.0);
    CHECK(std::abs(v_unc(binary_runs({0.6, 0.8, 0.7, 0.9})).value() - std::sqrt(0.0125)) < 1e-12);
    CHECK(v_unc(binary_runs({0.0, 1.0})).value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("v_unc errors") {
    CHECK_THROWS_AS(v_unc({{0.5, 0.5}}), ParameterError);
    CHECK_THROWS_AS(v_unc({{0.5, 0.6}, {0.5, 0.5}}), ParameterError);
    CHECK_THROWS_AS(v_unc({{0.5, 0.5}, {1.0}}), ParameterError);
}

TEST_CASE("v_unc tracks the mean-argmax class with ties to the lowest index") {
    // Mean is (0.5, 0.5): class 0 is tracked.
    const Runs r{{0.7, 0.3}, {0.3, 0.7}};
    CHECK(v_unc(r).value() == doctest::Approx(0.2).epsilon(1e-12));
    // Class 2 wins on the mean even though class 0 wins one pass.
    const Runs s{{0.6, 0.0, 0.4}, {0.0, 0.2, 0.8}};
    CHECK(v_unc(s).value() == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("class_mean aggregate") {
    const Runs r{{0.6, 0.4, 0.0}, {0.8, 0.2, 0.0}};
    // per-class std: 0.1, 0.1, 0
    CHECK(v_unc(r, UncAggregate::class_mean).value() == doctest::Approx(0.2 / 3).epsilon(1e-12));
    CHECK(parse_unc_aggregate("class_mean") == UncAggregate::class_mean);
    CHECK(to_string(UncAggregate::predicted_class) == "predicted_class");
    CHECK_THROWS_AS(parse_unc_aggregate("mean"), ParameterError);
}

TEST_CASE("property: v_unc bounds, oracle agreement and order invariance") {
    Rng rng(31);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + rng.index(15), c = 2 + rng.index(8);
        Runs runs;
        for (std::size_t i = 0; i < n; ++i) runs.push_back(random_simplex(c, rng));
        const double v = v_unc(runs).value();
        CHECK(v >= 0.0);
        CHECK(v <= 0.5);
        CHECK(std::abs(v - oracle_std(runs)) < 1e-12);

        Runs shuffled = runs;
        for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
        CHECK(std::abs(v_unc(shuffled).value() - v) < 1e-15);
    }
}

TEST_CASE("batch_v_unc matches per-row v_unc") {
    Rng rng(32);
    std::vector<Tensor> passes;
    for (int i = 0; i < 5; ++i) {
        Tensor t({3, 4});
        for (std::size_t r = 0; r < 3; ++r) {
            auto s = random_simplex(4, rng);
            std::copy(s.begin(), s.end(), t.row(r).begin());
        }
        passes.push_back(t);
    }
    const auto scores = batch_v_unc(passes);
    REQUIRE(scores.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        Runs runs;
        for (const auto& p : passes) runs.emplace_back(p.row(r).begin(), p.row(r).end());
        CHECK(scores[r].value() == v_unc(runs).value());
    }
    passes.back() = Tensor({2, 4}, 0.25);
    CHECK_THROWS_AS(batch_v_unc(passes), DimensionError);
}

TEST_CASE("dropout-free networks have zero uncertainty and uplink nothing") {
    Rng rng(33);
    const Network net = build_network({{6, 12, 3}, 0.0}, rng);
    Tensor x({20, 6});
    for (double& v : x.data()) v = rng.normal();
    const auto scores = batch_v_unc(mc_predict(net, x, kDefaultMcPasses, rng));
    for (const auto& s : scores) CHECK(s.value() == 0.0);
    CHECK(select_uplink(x, scores).selected.empty());
}

TEST_CASE("confidence_score") {
    const std::vector<double> a{0.5, 0.5}, b{1.0, 0.0}, u(5, 0.2);
    CHECK(confidence_score(a) == 0.5);
    CHECK(confidence_score(b) == 1.0);
    CHECK(confidence_score(u) == 0.2);
    CHECK_THROWS_AS(confidence_score(std::vector<double>{}), ParameterError);
}

TEST_CASE("select_uplink examples") {
    const Tensor x({2, 1});
    const std::vector<UncertaintyScore> s{UncertaintyScore(0.009), UncertaintyScore(0.001)};
    const auto p = select_uplink(x, s, 0.008);
    CHECK(p.selected == std::vector<std::size_t>{0});
    CHECK(p.rejected == std::vector<std::size_t>{1});

    const std::vector<UncertaintyScore> z{UncertaintyScore(0.0), UncertaintyScore(1e-300)};
    CHECK(select_uplink(x, z, 0.0).selected == std::vector<std::size_t>{1});
    CHECK(select_uplink(x, s, 0.51).selected.empty());
    // Strict comparison.
    CHECK(select_uplink(x, s, 0.009).selected.empty());

    CHECK_THROWS_AS(select_uplink(Tensor({3, 1}), s), ParameterError);
    CHECK_THROWS_AS(select_uplink(x, s, -1.0), ParameterError);
}

TEST_CASE("property: select_uplink is an exact order-preserving partition") {
    Rng rng(34);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.index(40);
        std::vector<UncertaintyScore> s;
        for (std::size_t i = 0; i < n; ++i) s.emplace_back(rng.uniform(0.0, 0.02));
        const double th = rng.uniform(0.0, 0.02);
        const auto p = select_uplink(Tensor({n, 2}), s, th);
        CHECK(p.selected.size() + p.rejected.size() == n);
        CHECK(std::is_sorted(p.selected.begin(), p.selected.end()));
        CHECK(std::is_sorted(p.rejected.begin(), p.rejected.end()));
        std::set<std::size_t> all(p.selected.begin(), p.selected.end());
        all.insert(p.rejected.begin(), p.rejected.end());
        CHECK(all.size() == n);
        for (auto i : p.selected) CHECK(s[i].value() > th);
        for (auto i : p.rejected) CHECK(s[i].value() <= th);
    }
}

TEST_CASE("confidence baseline selects the least confident") {
    const std::vector<double> c{0.9, 0.2, 0.6, 0.4};
    const auto p = select_by_confidence(c, 0.5);
    CHECK(p.selected == std::vector<std::size_t>{1, 3});
    CHECK(p.rejected == std::vector<std::size_t>{0, 2});
    const std::vector<double> tie{0.5, 0.5, 0.5};
    CHECK(select_by_confidence(tie, 0.5).selected == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(select_by_confidence(c, 1.5), ParameterError);
}

TEST_CASE("random baseline") {
    Rng a(35), b(35);
    CHECK(select_random(10, 1.0, a).selected.size() == 10);
    Rng r(36);
    const auto p = select_random(1000, 0.5, r);
    CHECK(p.selected.size() == 500);
    CHECK(p.rejected.size() == 500);
    Rng c(37), d(37);
    CHECK(select_random(100, 0.3, c).selected == select_random(100, 0.3, d).selected);
    CHECK(select_random(7, 0.5, a).selected.size() == 3);
    CHECK_THROWS_AS(select_random(10, -0.1, b), ParameterError);
}

TEST_CASE("selection kind names") {
    for (auto k : {SelectionKind::ugs, SelectionKind::confidence, SelectionKind::random, SelectionKind::all}) {
        CHECK(parse_selection_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_selection_kind("greedy"), ParameterError);
    const std::vector<UncertaintyScore> s{UncertaintyScore(0.1), UncertaintyScore(0.3)};
    CHECK(mean_score(s) == doctest::Approx(0.2));
    CHECK(mean_score(std::vector<UncertaintyScore>{}) == 0.0);
}
