// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"

#include "cdca/models.hpp"

using namespace cdca;

namespace {

Tensor random_inputs(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t({rows, cols});
    for (double& v : t.data()) v = rng.normal();
    return t;
}

} // namespace

TEST_CASE("spec validation") {
    const MLPSpec one_width{{4}, 0.0}, empty{{}, 0.0}, zero_width{{4, 0, 2}, 0.0}, full_drop{{4, 2}, 1.0};
    CHECK_THROWS_AS(one_width.validate(), ParameterError);
    CHECK_THROWS_AS(empty.validate(), ParameterError);
    CHECK_THROWS_AS(zero_width.validate(), ParameterError);
    CHECK_THROWS_AS(full_drop.validate(), ParameterError);
    Rng rng(1);
    CHECK_THROWS_AS(build_network(empty, rng), ParameterError);
}

TEST_CASE("default specs and capacity ordering") {
    const auto s = MLPSpec::default_student(16, 4);
    const auto t = MLPSpec::default_teacher(16, 4);
    const auto d = MLPSpec::default_discriminator(64);
    CHECK(s.widths == std::vector<std::size_t>{16, 32, 32, 4});
    CHECK(t.widths == std::vector<std::size_t>{16, 128, 128, 64, 4});
    CHECK(d.widths == std::vector<std::size_t>{64, 32, 2});
    CHECK(s.dropout_rate == 0.1);
    CHECK(t.dropout_rate == 0.1);

    Rng rng(2);
    const Network sn = build_network(s, rng);
    const Network tn = build_network(t, rng);
    // 16*32+32 + 32*32+32 + 32*4+4
    CHECK(sn.parameter_count() == 1732);
    // 16*128+128 + 128*128+128 + 128*64+64 + 64*4+4
    CHECK(tn.parameter_count() == 27204);
    CHECK(tn.parameter_count() > sn.parameter_count());
    CHECK(tn.feature_width() == 64);
}

TEST_CASE("build_network shapes, determinism and init range") {
    Rng a(3), b(3);
    const MLPSpec spec{{4, 8, 3}, 0.0};
    const Network n1 = build_network(spec, a);
    const Network n2 = build_network(spec, b);
    CHECK(n1 == n2);
    REQUIRE(n1.layers().size() == 2);
    CHECK(n1.layers()[0].weight.shape() == Shape{4, 8});
    CHECK(n1.layers()[1].weight.shape() == Shape{8, 3});
    CHECK(n1.feature_cut() == 1);
    for (const auto& l : n1.layers()) {
        for (double v : l.bias.values()) CHECK(v == 0.0);
    }
    const double limit = std::sqrt(6.0 / 12.0);
    for (double v : n1.layers()[0].weight.values()) {
        CHECK(v >= -limit);
        CHECK(v <= limit);
    }

    Rng big(4);
    const Network wide = build_network({{100, 100}, 0.0}, big);
    double mean = 0.0;
    for (double v : wide.layers()[0].weight.values()) mean += v;
    CHECK(std::abs(mean / 1e4) < 0.01);
}

TEST_CASE("predict modes") {
    Rng rng(5);
    const Network net = build_network({{6, 10, 3}, 0.5}, rng);
    const Tensor x = random_inputs(4, 6, rng);
    const Tensor p1 = predict(net, x);
    CHECK(bit_equal(p1, predict(net, x)));
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (double v : p1.row(r)) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    Rng s1(100), s2(200);
    CHECK_FALSE(bit_equal(predict(net, x, s1), predict(net, x, s2)));
    CHECK_THROWS_AS(predict(net, random_inputs(2, 5, rng)), DimensionError);

    Rng r0(6);
    const Network plain = build_network({{6, 10, 3}, 0.0}, r0);
    Rng s3(9);
    CHECK(bit_equal(predict(plain, x, s3), predict(plain, x)));
}

TEST_CASE("mc_predict") {
    Rng rng(7);
    const Network plain = build_network({{5, 8, 3}, 0.0}, rng);
    const Tensor x = random_inputs(3, 5, rng);
    Rng m(1);
    const auto runs = mc_predict(plain, x, 10, m);
    REQUIRE(runs.size() == 10);
    for (const auto& r : runs) CHECK(bit_equal(r, runs.front()));

    const Network drop = build_network({{5, 8, 3}, 0.3}, rng);
    Rng a(11), b(11);
    const auto pa = mc_predict(drop, x, 2, a);
    const auto pb = mc_predict(drop, x, 2, b);
    CHECK(bit_equal(pa[0], pb[0]));
    CHECK(bit_equal(pa[1], pb[1]));
    CHECK_FALSE(bit_equal(pa[0], pa[1]));

    Rng c(12);
    CHECK_THROWS_AS(mc_predict(drop, x, 0, c), ParameterError);
}

TEST_CASE("mc_predict mean stays close to the deterministic pass at low dropout") {
    Rng rng(13);
    const Network net = build_network({{4, 16, 3}, 0.1}, rng);
    const Tensor x = random_inputs(2, 4, rng);
    Rng m(14);
    const auto runs = mc_predict(net, x, 1000, m);
    const Tensor det = predict(net, x);
    for (std::size_t i = 0; i < det.size(); ++i) {
        double mean = 0.0;
        for (const auto& r : runs) mean += r[i];
        CHECK(std::abs(mean / 1000 - det[i]) < 0.02);
    }
}

TEST_CASE("features compose with the last layer into predict") {
    Rng rng(15);
    const Network net = build_network({{5, 7, 6, 3}, 0.2}, rng);
    const Tensor x = random_inputs(4, 5, rng);
    const Tensor f = features(net, x);
    CHECK(f.cols() == net.feature_width());
    CHECK(f.cols() == 6);
    const auto& last = net.layers().back();
    const Tensor p = softmax(linear_forward(f, last.weight, last.bias));
    const Tensor q = predict(net, x);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);

    const Tensor twice = Tensor::matrix({{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}});
    const Tensor ft = features(net, twice);
    for (std::size_t c = 0; c < ft.cols(); ++c) CHECK(ft(0, c) == ft(1, c));
}

TEST_CASE("discriminator_loss") {
    Rng rng(16);
    Discriminator d = build_discriminator({{3, 4, 2}, 0.0}, rng);
    // Zeroed last layer gives uniform outputs.
    auto layers = d.net.layers();
    for (double& v : layers.back().weight.data()) v = 0.0;
    d.net.assign_layers(layers);
    const Tensor fs = random_inputs(3, 3, rng), ft = random_inputs(2, 3, rng);
    CHECK(std::abs(discriminator_loss(d, fs, ft) + std::log(0.5 + kLogEpsilon)) < 1e-14);

    // Perfect head on a separable toy: sign of the first feature.
    Discriminator p = build_discriminator({{1, 2}, 0.0}, rng);
    auto pl = p.net.layers();
    pl[0].weight = Tensor::matrix({{-50, 50}});
    pl[0].bias = Tensor::vector({0, 0});
    p.net.assign_layers(pl);
    CHECK(discriminator_loss(p, Tensor::matrix({{-1}, {-2}}), Tensor::matrix({{1}, {3}})) < 1e-12);

    // Hand-built four rows through a linear head.
    Discriminator h = build_discriminator({{1, 2}, 0.0}, rng);
    auto hl = h.net.layers();
    hl[0].weight = Tensor::matrix({{0.5, -0.5}});
    hl[0].bias = Tensor::vector({0.1, 0.0});
    h.net.assign_layers(hl);
    const double rows[4] = {1.0, -2.0, 0.5, 3.0};
    const int labels[4] = {0, 0, 1, 1};
    double want = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double z0 = 0.5 * rows[i] + 0.1, z1 = -0.5 * rows[i];
        const double p = std::exp(labels[i] == 0 ? z0 : z1) / (std::exp(z0) + std::exp(z1));
        want -= std::log(p + kLogEpsilon);
    }
    want /= 4;
    const double got = discriminator_loss(h, Tensor::matrix({{1.0}, {-2.0}}), Tensor::matrix({{0.5}, {3.0}}));
    CHECK(std::abs(got - want) < 1e-12);

    CHECK_THROWS_AS(discriminator_loss(h, Tensor({2, 2}), Tensor({2, 1})), DimensionError);
}

TEST_CASE("clone_params is a deep copy") {
    Rng rng(17);
    const Network src = build_network({{3, 4, 2}, 0.1}, rng);
    Network copy = clone_params(src);
    CHECK(copy == src);
    CHECK(clone_params(clone_params(src)) == src);
    auto params = copy.parameters();
    std::vector<Tensor> grads;
    for (const Tensor* p : params) grads.emplace_back(p->shape(), 1.0);
    sgd_step(params, grads, 0.5);
    CHECK_FALSE(copy == src);
    Rng again(17);
    CHECK(src == build_network({{3, 4, 2}, 0.1}, again));
}

TEST_CASE("assign_layers rejects shape changes") {
    Rng rng(18);
    Network net = build_network({{3, 4, 2}, 0.0}, rng);
    auto layers = net.layers();
    layers[0].weight = Tensor({4, 4});
    CHECK_THROWS_AS(net.assign_layers(layers), DimensionError);
    layers.pop_back();
    CHECK_THROWS_AS(net.assign_layers(layers), DimensionError);
}

TEST_CASE("argmax_rows breaks ties toward the lowest index") {
    CHECK(argmax_rows(Tensor::matrix({{0.2, 0.5, 0.3}, {0.4, 0.4, 0.2}, {0.1, 0.1, 0.8}})) ==
          std::vector<int>{1, 0, 2});
}
