#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ddrm/degradation.hpp"
#include "test_util.hpp"

using namespace ddrm;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double m = 0.0;
    for (std::size_t i = 0; i < a.a.size(); ++i) m = std::max(m, std::abs(a.a[i] - b.a[i]));
    return m;
}

Matrix reconstruct(const SvdResult& f, int rows, int cols) {
    Matrix out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < f.s.size(); ++k) acc += f.u(i, k) * f.s[k] * f.v(j, k);
            out(i, j) = acc;
        }
    return out;
}

double orthogonality_error(const Matrix& q) {
    double m = 0.0;
    for (int i = 0; i < q.cols; ++i)
        for (int j = 0; j < q.cols; ++j) {
            double dot = 0.0;
            for (int r = 0; r < q.rows; ++r) dot += q(r, i) * q(r, j);
            m = std::max(m, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    return m;
}

void check_svd_invariants(const Matrix& h) {
    const SvdResult f = svd(h);
    CHECK(max_abs_diff(reconstruct(f, h.rows, h.cols), h) < 1e-10);
    CHECK(orthogonality_error(f.u) < 1e-10);
    CHECK(orthogonality_error(f.v) < 1e-10);
    for (std::size_t i = 0; i + 1 < f.s.size(); ++i) CHECK(f.s[i] >= f.s[i + 1]);
    for (double s : f.s) CHECK(s >= 0.0);
}

}  // namespace

TEST_CASE("identity degradation") {
    const auto model = build_isolated(3);
    CHECK(model.rank == 3);
    for (double s : model.s) CHECK(s == Catch::Approx(1.0).margin(1e-12));
    CHECK(max_abs_diff(model.h, Matrix::identity(3)) == 0.0);
    CHECK_THROWS_AS(build_isolated(0), ConfigError);
}

TEST_CASE("shared design matrix and singular values") {
    const auto model = build_shared(2);
    REQUIRE(model.h.rows == 3);
    REQUIRE(model.h.cols == 2);
    Matrix want(3, 2);
    want(0, 0) = 1;
    want(0, 1) = 1;
    want(1, 0) = 1;
    want(2, 1) = 1;
    CHECK(max_abs_diff(model.h, want) == 0.0);
    CHECK(std::abs(model.s[0] - std::sqrt(3.0)) < 1e-10);
    CHECK(std::abs(model.s[1] - 1.0) < 1e-10);

    const auto one = build_shared(1);
    CHECK(one.h.rows == 2);
    CHECK(std::abs(one.s[0] - std::sqrt(2.0)) < 1e-10);
}

TEST_CASE("rank-deficient matrix") {
    Matrix h(2, 2);
    h(0, 0) = 1;
    h(0, 1) = 1;
    h(1, 0) = 2;
    h(1, 1) = 2;
    const auto model = make_model(h);
    CHECK(model.rank == 1);
    CHECK(std::abs(model.s[0] - std::sqrt(10.0)) < 1e-10);
    CHECK(model.s[1] < 1e-10);
    CHECK(model.observed(0));
    CHECK(!model.observed(1));
    check_svd_invariants(h);
}

TEST_CASE("svd invariants over random matrices") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int rows = 1 + static_cast<int>(rng() % 8);
        const int cols = 1 + static_cast<int>(rng() % 8);
        check_svd_invariants(testutil::random_matrix(rng, rows, cols));
    }
    // wide matrices go through the transpose path
    check_svd_invariants(testutil::random_matrix(rng, 3, 7));
    check_svd_invariants(testutil::random_matrix(rng, 1, 5));
}

TEST_CASE("singular values match an independent eigensolver") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 2 + static_cast<int>(rng() % 7);
        const int cols = 2 + static_cast<int>(rng() % 7);
        const Matrix h = testutil::random_matrix(rng, rows, cols);
        Matrix hth(cols, cols);
        for (int i = 0; i < cols; ++i)
            for (int j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (int r = 0; r < rows; ++r) acc += h(r, i) * h(r, j);
                hth(i, j) = acc;
            }
        const auto eig = testutil::symmetric_eigenvalues(hth);
        const auto f = svd(h);
        for (std::size_t i = 0; i < f.s.size(); ++i)
            CHECK(f.s[i] * f.s[i] == Catch::Approx(std::max(eig[i], 0.0)).margin(1e-8));
    }
}

TEST_CASE("svd sign convention is deterministic") {
    std::mt19937_64 rng(13);
    const Matrix h = testutil::random_matrix(rng, 4, 4);
    const auto f = svd(h);
    for (int j = 0; j < 4; ++j) {
        double best = 0.0;
        for (int i = 0; i < 4; ++i)
            if (std::abs(f.v(i, j)) > std::abs(best)) best = f.v(i, j);
        CHECK(best > 0.0);
    }
}

TEST_CASE("svd of the zero matrix and at the size limit") {
    const Matrix zero(3, 2);
    const auto f = svd(zero);
    for (double s : f.s) CHECK(s == 0.0);
    check_svd_invariants(zero);
    const auto model = make_model(zero);
    CHECK(model.rank == 0);
    CHECK(!model.observed(0));
    CHECK(!model.observed(1));

    std::mt19937_64 rng(20);
    check_svd_invariants(testutil::random_matrix(rng, 64, 64));
    check_svd_invariants(testutil::random_matrix(rng, 64, 5));
}

TEST_CASE("svd input validation") {
    CHECK_THROWS_AS(svd(Matrix()), ConfigError);
    CHECK_THROWS_AS(svd(Matrix(65, 2)), ConfigError);
    Matrix nan_m(2, 2);
    nan_m(0, 0) = std::nan("");
    CHECK_THROWS_AS(svd(nan_m), ConfigError);
}

namespace {

ComplexTensor random_tensor(std::mt19937_64& rng, TensorShape shape) {
    std::normal_distribution<double> dist;
    ComplexTensor t(shape);
    for (auto& z : t.v) z = {dist(rng), dist(rng)};
    return t;
}

}  // namespace

TEST_CASE("isolated projection is the identity with sigma passthrough") {
    std::mt19937_64 rng(14);
    const auto model = build_isolated(2);
    MeasurementSet ms;
    ms.y = random_tensor(rng, {2, 3, 4});
    ms.sigma_y = RealTensor(ms.y.shape, 0.5);
    const auto sp = to_spectral(ms, model);
    for (std::size_t i = 0; i < ms.y.v.size(); ++i) {
        CHECK(std::abs(sp.ybar.v[i] - ms.y.v[i]) < 1e-12);
        CHECK(sp.sigma_bar.v[i] == Catch::Approx(0.5).margin(1e-12));
    }
}

TEST_CASE("iid noise maps to sigma_y / s_i") {
    std::mt19937_64 rng(15);
    const auto model = build_shared(2);
    MeasurementSet ms;
    ms.y = random_tensor(rng, {3, 2, 2});
    ms.sigma_y = RealTensor(ms.y.shape, 0.7);
    const auto sp = to_spectral(ms, model);
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
            CHECK(sp.sigma_bar.at(0, k, l) == Catch::Approx(0.7 / std::sqrt(3.0)).margin(1e-12));
            CHECK(sp.sigma_bar.at(1, k, l) == Catch::Approx(0.7 / 1.0).margin(1e-12));
        }
}

TEST_CASE("pseudoinverse consistency for full-column-rank designs") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 4);
        const auto model = trial % 2 == 0 ? build_shared(n) : build_isolated(n);
        const ComplexTensor x = random_tensor(rng, {n, 2, 3});
        MeasurementSet ms;
        ms.y = apply(model, x);
        ms.sigma_y = RealTensor(ms.y.shape, 0.0);
        const auto sp = to_spectral(ms, model);
        const ComplexTensor back = from_spectral(sp.ybar, model);
        for (std::size_t i = 0; i < x.v.size(); ++i)
            CHECK(std::abs(back.v[i] - x.v[i]) < 1e-10);
    }
}

TEST_CASE("spectral projections invert each other") {
    std::mt19937_64 rng(17);
    const auto model = build_shared(2);
    const ComplexTensor xbar = random_tensor(rng, {2, 3, 3});
    const ComplexTensor round = state_to_spectral(from_spectral(xbar, model), model);
    for (std::size_t i = 0; i < xbar.v.size(); ++i)
        CHECK(std::abs(round.v[i] - xbar.v[i]) < 1e-12);
}

TEST_CASE("apply reads the mixture row") {
    const auto model = build_shared(2);
    ComplexTensor x(TensorShape{2, 1, 1});
    x.at(0, 0, 0) = {0.3, -0.1};
    x.at(1, 0, 0) = {0.0, 0.0};
    const auto y = apply(model, x);
    CHECK(y.at(0, 0, 0) == x.at(0, 0, 0));
    CHECK(y.at(1, 0, 0) == x.at(0, 0, 0));
    CHECK(std::abs(y.at(2, 0, 0)) == 0.0);

    std::mt19937_64 rng(18);
    const ComplexTensor r = random_tensor(rng, {2, 2, 2});
    const auto yr = apply(model, r);
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
            CHECK(std::abs(yr.at(0, k, l) - (yr.at(1, k, l) + yr.at(2, k, l))) < 1e-12);
}

TEST_CASE("shape mismatches are rejected") {
    const auto model = build_shared(2);
    std::mt19937_64 rng(19);
    MeasurementSet ms;
    ms.y = random_tensor(rng, {2, 2, 2});  // needs 3 channels
    ms.sigma_y = RealTensor(ms.y.shape, 0.5);
    CHECK_THROWS_WITH(to_spectral(ms, model),
                      Catch::Matchers::ContainsSubstring("channel count"));
    CHECK_THROWS_AS(apply(model, random_tensor(rng, {3, 2, 2})), ConfigError);
    CHECK_THROWS_AS(from_spectral(random_tensor(rng, {3, 2, 2}), model), ConfigError);
}
