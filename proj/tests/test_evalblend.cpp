#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <random>

#include "ddrm/evalblend.hpp"
#include "test_util.hpp"

using namespace ddrm;

TEST_CASE("si_sdr caps exact and scaled matches") {
    std::mt19937_64 rng(61);
    const AudioBuffer ref = testutil::random_buffer(rng, 2048);
    CHECK(si_sdr(ref, ref) == 100.0);

    AudioBuffer scaled = ref;
    for (auto& s : scaled.samples) s *= 2.0;
    CHECK(si_sdr(scaled, ref) == 100.0);
}

TEST_CASE("orthogonal noise at a tenth of the reference norm gives 20 dB") {
    std::mt19937_64 rng(62);
    const AudioBuffer ref = testutil::random_buffer(rng, 4096);
    AudioBuffer noise = testutil::random_buffer(rng, 4096);

    double rr = 0.0, nr = 0.0;
    for (std::size_t i = 0; i < ref.samples.size(); ++i) {
        rr += ref.samples[i] * ref.samples[i];
        nr += noise.samples[i] * ref.samples[i];
    }
    for (std::size_t i = 0; i < ref.samples.size(); ++i)
        noise.samples[i] -= nr / rr * ref.samples[i];
    double nn = 0.0;
    for (double x : noise.samples) nn += x * x;
    const double g = std::sqrt(rr / nn) / 10.0;

    AudioBuffer est = ref;
    for (std::size_t i = 0; i < est.samples.size(); ++i) est.samples[i] += g * noise.samples[i];
    CHECK(si_sdr(est, ref) == Catch::Approx(20.0).margin(1e-9));
}

TEST_CASE("si_sdr is scale invariant") {
    std::mt19937_64 rng(63);
    const AudioBuffer ref = testutil::random_buffer(rng, 1024);
    AudioBuffer est = testutil::random_buffer(rng, 1024);
    const double base = si_sdr(est, ref);
    for (const double c : {0.001, 0.5, 3.0, 1e6}) {
        AudioBuffer scaled = est;
        for (auto& s : scaled.samples) s *= c;
        CHECK(si_sdr(scaled, ref) == Catch::Approx(base).margin(1e-9));
    }
}

TEST_CASE("si_sdr input validation") {
    AudioBuffer zero;
    zero.samples.assign(100, 0.0);
    AudioBuffer est;
    est.samples.assign(100, 0.1);
    CHECK_THROWS_WITH(si_sdr(est, zero), Catch::Matchers::ContainsSubstring("zero reference"));
    AudioBuffer shorter;
    shorter.samples.assign(99, 0.1);
    CHECK_THROWS_AS(si_sdr(shorter, zero), ConfigError);
}

TEST_CASE("swapped estimates are unscrambled by the permutation search") {
    std::mt19937_64 rng(64);
    const AudioBuffer a = testutil::random_buffer(rng, 1000);
    const AudioBuffer b = testutil::random_buffer(rng, 1000);
    const auto rep = eval_permuted({b, a}, {a, b});
    CHECK(rep.permutation == std::vector<int>{1, 0});
    CHECK(rep.per_source_db[0] == 100.0);
    CHECK(rep.per_source_db[1] == 100.0);

    const auto single = eval_permuted({a}, {a});
    CHECK(single.permutation == std::vector<int>{0});
}

TEST_CASE("three-source assignment matches an exhaustive oracle") {
    std::mt19937_64 rng(65);
    std::vector<AudioBuffer> refs, ests;
    for (int i = 0; i < 3; ++i) refs.push_back(testutil::random_buffer(rng, 800));
    for (int i = 0; i < 3; ++i) {
        AudioBuffer e = refs[(i + 1) % 3];
        const AudioBuffer extra = testutil::random_buffer(rng, 800, 8000, 0.1 * (i + 1));
        for (std::size_t t = 0; t < e.samples.size(); ++t) e.samples[t] += extra.samples[t];
        ests.push_back(std::move(e));
    }

    // test-local oracle: explicit loops over all 6 assignments
    double best_mean = -1e300;
    std::vector<int> best_perm;
    for (int p0 = 0; p0 < 3; ++p0)
        for (int p1 = 0; p1 < 3; ++p1)
            for (int p2 = 0; p2 < 3; ++p2) {
                if (p0 == p1 || p1 == p2 || p0 == p2) continue;
                const double mean =
                    (si_sdr(ests[p0], refs[0]) + si_sdr(ests[p1], refs[1]) +
                     si_sdr(ests[p2], refs[2])) /
                    3.0;
                if (mean > best_mean) {
                    best_mean = mean;
                    best_perm = {p0, p1, p2};
                }
            }

    const auto rep = eval_permuted(ests, refs);
    CHECK(rep.permutation == best_perm);
    CHECK(rep.mean_db == Catch::Approx(best_mean).margin(1e-12));
}

TEST_CASE("eval rejects bad counts") {
    std::mt19937_64 rng(66);
    const AudioBuffer a = testutil::random_buffer(rng, 100);
    CHECK_THROWS_AS(eval_permuted({a}, {a, a}), ConfigError);
    CHECK_THROWS_AS(eval_permuted({}, {}), ConfigError);
    const std::vector<AudioBuffer> five(5, a);
    CHECK_THROWS_AS(eval_permuted(five, five), ConfigError);
}

TEST_CASE("blend endpoints are bitwise exact") {
    std::mt19937_64 rng(67);
    AudioBuffer disc = testutil::random_buffer(rng, 512);
    disc.samples[7] = -0.0;  // sign of zero must survive the endpoint
    const AudioBuffer gen = testutil::random_buffer(rng, 512);

    const AudioBuffer at1 = blend(disc, gen, 1.0);
    const AudioBuffer at0 = blend(disc, gen, 0.0);
    for (std::size_t i = 0; i < disc.samples.size(); ++i) {
        CHECK(std::memcmp(&at1.samples[i], &disc.samples[i], sizeof(double)) == 0);
        CHECK(std::memcmp(&at0.samples[i], &gen.samples[i], sizeof(double)) == 0);
    }

    const AudioBuffer mid = blend(disc, gen, 0.25);
    for (std::size_t i = 0; i < disc.samples.size(); ++i)
        CHECK(mid.samples[i] ==
              Catch::Approx(0.25 * disc.samples[i] + 0.75 * gen.samples[i]).margin(1e-15));

    CHECK_THROWS_AS(blend(disc, gen, 1.5), ConfigError);
    CHECK_THROWS_AS(blend(disc, gen, -0.1), ConfigError);
}

TEST_CASE("blend sweep runs the full grid") {
    std::mt19937_64 rng(68);
    const AudioBuffer ref = testutil::random_buffer(rng, 1024);
    AudioBuffer noisy = ref;
    const AudioBuffer extra = testutil::random_buffer(rng, 1024, 8000, 0.05);
    for (std::size_t i = 0; i < noisy.samples.size(); ++i) noisy.samples[i] += extra.samples[i];

    // generative output equals the reference, discriminative is noisy:
    // quality must increase monotonically as xi goes to 0
    const auto sweep = blend_sweep({noisy}, {ref}, {ref});
    REQUIRE(sweep.size() == 11);
    CHECK(sweep.front().xi == 0.0);
    CHECK(sweep.back().xi == 1.0);
    for (std::size_t i = 0; i + 1 < sweep.size(); ++i)
        CHECK(sweep[i].report.mean_db >= sweep[i + 1].report.mean_db);
    CHECK(sweep.front().report.mean_db == 100.0);

    // identical inputs give a flat curve
    const auto flat = blend_sweep({noisy}, {noisy}, {ref});
    for (const auto& p : flat) CHECK(p.report.mean_db == Catch::Approx(flat[0].report.mean_db));
}
