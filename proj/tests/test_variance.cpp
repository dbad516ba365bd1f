#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ddrm/variance.hpp"

using namespace ddrm;

TEST_CASE("fixed field") {
    const auto f = fixed_field(TensorShape{3, 257, 256}, 0.5);
    CHECK(f.shape.count() == 3u * 257 * 256);
    for (double v : f.v) CHECK(v == 0.5);

    const auto zero = fixed_field(TensorShape{1, 2, 2}, 0.0);
    for (double v : zero.v) CHECK(v == 0.0);

    CHECK_THROWS_AS(fixed_field(TensorShape{1, 1, 1}, -0.1), ConfigError);
}

TEST_CASE("sigmoid value at zero difference") {
    VarianceDesign d;
    d.kind = VarianceDesign::Kind::Sigmoid;
    CHECK(std::abs(sigmoid_std(0.0, d) - 0.2) < 1e-12);
}

TEST_CASE("sigmoid saturates at alpha - gamma") {
    VarianceDesign d;
    d.kind = VarianceDesign::Kind::Sigmoid;
    CHECK(std::abs(sigmoid_std(50.0, d) - 1.2) < 1e-12);
    // strictly below the asymptote while exp(-beta*diff) is resolvable in
    // double precision; beyond that it rounds onto alpha - gamma exactly
    for (double diff = 0.0; diff <= 17.0; diff += 0.37) CHECK(sigmoid_std(diff, d) < 1.2);
    for (double diff = 17.0; diff <= 100.0; diff += 0.37) CHECK(sigmoid_std(diff, d) <= 1.2);
}

TEST_CASE("beta zero flattens the curve") {
    VarianceDesign d;
    d.kind = VarianceDesign::Kind::Sigmoid;
    d.beta = 0.0;
    for (double diff = 0.0; diff <= 20.0; diff += 0.1)
        CHECK(sigmoid_std(diff, d) == Catch::Approx(0.2).margin(1e-15));
}

TEST_CASE("sigmoid is strictly increasing in the difference magnitude") {
    VarianceDesign d;
    d.kind = VarianceDesign::Kind::Sigmoid;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> dist(0.0, 6.0);
    for (int i = 0; i < 1000; ++i) {
        double a = dist(rng), b = dist(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        CHECK(sigmoid_std(a, d) < sigmoid_std(b, d));
    }
}

TEST_CASE("sigmoid field over tensors, range and clamping") {
    VarianceDesign d;
    d.kind = VarianceDesign::Kind::Sigmoid;
    std::mt19937_64 rng(22);
    std::normal_distribution<double> dist;
    ComplexTensor m(TensorShape{1, 4, 5}), e(TensorShape{1, 4, 5});
    for (auto& z : m.v) z = {dist(rng), dist(rng)};
    for (auto& z : e.v) z = {dist(rng), dist(rng)};

    const auto f = sigmoid_field(m, e, d);
    for (std::size_t i = 0; i < f.v.size(); ++i) {
        CHECK(f.v[i] >= 0.2 - 1e-12);
        CHECK(f.v[i] < 1.2);
        CHECK(f.v[i] == Catch::Approx(sigmoid_std(std::abs(m.v[i] - e.v[i]), d)).margin(1e-15));
    }

    // gamma > alpha/2 fails validation but the field clamps defensively
    VarianceDesign neg = d;
    neg.gamma = 1.5;
    CHECK_THROWS_AS(neg.validate(), ConfigError);
    SigmoidStats stats;
    const auto clamped = sigmoid_field(m, m, neg, &stats);
    CHECK(stats.clamped == clamped.v.size());
    for (double v : clamped.v) CHECK(v == 0.0);

    ComplexTensor other(TensorShape{1, 4, 6});
    CHECK_THROWS_AS(sigmoid_field(m, other, d), ConfigError);
}

TEST_CASE("variance design validation") {
    VarianceDesign ok;
    CHECK_NOTHROW(ok.validate());
    VarianceDesign bad;
    bad.fixed_value = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    VarianceDesign bad2;
    bad2.kind = VarianceDesign::Kind::Sigmoid;
    bad2.alpha = 1.0;  // alpha/2 < gamma
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
