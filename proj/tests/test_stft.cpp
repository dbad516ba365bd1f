#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "ddrm/stft.hpp"
#include "test_util.hpp"

using namespace ddrm;

namespace {

double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += a[i] * a[i];
    }
    return std::sqrt(diff / (ref > 0 ? ref : 1.0));
}

// O(n^2) reference DFT.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / n;
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace

TEST_CASE("fft matches a naive dft") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> dist;
    std::vector<std::complex<double>> x(128);
    for (auto& z : x) z = {dist(rng), dist(rng)};
    auto want = naive_dft(x);
    auto got = x;
    ddrm::detail::fft(got);
    for (std::size_t k = 0; k < x.size(); ++k)
        CHECK(std::abs(got[k] - want[k]) < 1e-9);
}

TEST_CASE("all-zero buffer gives an all-zero spectrogram") {
    AudioBuffer b;
    b.samples.assign(4000, 0.0);
    const auto spec = stft(b);
    for (const auto& z : spec.data) CHECK(std::abs(z) == 0.0);
    CHECK(spec.shape.bins == 257);
    CHECK(spec.shape.frames == 256);
    CHECK(spec.shape.channels == 1);
}

TEST_CASE("bin-centered sinusoid concentrates its energy") {
    AudioBuffer b;
    b.sample_rate = 8000;
    b.samples.resize(8000);
    const int k0 = 16;  // 250 Hz at window 512, 8 kHz
    for (std::size_t t = 0; t < b.samples.size(); ++t)
        b.samples[t] = 0.5 * std::sin(2.0 * std::numbers::pi * k0 * 8000.0 / 512.0 * t / 8000.0);
    const auto spec = stft(b);
    double total = 0.0, near = 0.0;
    for (int k = 0; k < spec.shape.bins; ++k)
        for (int l = 0; l < spec.shape.frames; ++l) {
            const double e = std::norm(spec.at(0, k, l));
            total += e;
            if (std::abs(k - k0) <= 1) near += e;
        }
    CHECK(near / total >= 0.99);
}

TEST_CASE("stft/istft round trip reconstructs the signal") {
    std::mt19937_64 rng(2);
    for (const std::size_t n :
         {std::size_t(100), std::size_t(511), std::size_t(8000), std::size_t(65536),
          std::size_t(90000), std::size_t(200001)}) {
        const AudioBuffer b = testutil::random_buffer(rng, n);
        const AudioBuffer r = istft(stft(b));
        REQUIRE(r.samples.size() == b.samples.size());
        CHECK(rel_l2_error(r.samples, b.samples) < 1e-6);
    }
}

TEST_CASE("delta impulse is restored in place") {
    for (const long pos : {0L, 1L, 1000L, 65535L}) {
        AudioBuffer b;
        b.samples.assign(65536, 0.0);
        b.samples[pos] = 1.0;
        const AudioBuffer r = istft(stft(b));
        for (std::size_t i = 0; i < r.samples.size(); ++i)
            CHECK(std::abs(r.samples[i] - b.samples[i]) < 1e-6);
    }
}

TEST_CASE("stft is linear") {
    std::mt19937_64 rng(3);
    const AudioBuffer x = testutil::random_buffer(rng, 6000);
    const AudioBuffer y = testutil::random_buffer(rng, 6000);
    const double a = 1.7, b = -0.4;
    AudioBuffer combo;
    combo.samples.resize(6000);
    for (int i = 0; i < 6000; ++i)
        combo.samples[i] = a * x.samples[i] + b * y.samples[i];

    const auto sx = stft(x), sy = stft(y), sc = stft(combo);
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < sc.data.size(); ++i) {
        const auto want = a * sx.data[i] + b * sy.data[i];
        diff += std::norm(sc.data[i] - want);
        ref += std::norm(want);
    }
    CHECK(std::sqrt(diff / ref) < 1e-9);
}

TEST_CASE("spectrogram energy tracks the windowed frame energy exactly") {
    // Parseval per frame: one-sided energy (interior bins doubled) equals
    // window_size times the windowed-frame energy, scaled by 4/(W^2 scale^2).
    std::mt19937_64 rng(4);
    const StftConfig cfg;
    const auto w = ddrm::detail::hann_periodic(cfg.window_size);
    for (int trial = 0; trial < 4; ++trial) {
        const AudioBuffer b = testutil::random_buffer(rng, 30000 + 7777 * trial);
        const auto spec = stft(b, cfg);

        double spec_energy = 0.0;
        for (int k = 0; k < spec.shape.bins; ++k) {
            const double weight = (k == 0 || k == cfg.window_size / 2) ? 1.0 : 2.0;
            for (int l = 0; l < spec.shape.frames; ++l)
                spec_energy += weight * std::norm(spec.at(0, k, l));
        }

        double windowed = 0.0;
        const long stride = cfg.block_stride();
        const int front = cfg.window_size - cfg.hop_size;
        const long n = static_cast<long>(b.samples.size());
        for (int blk = 0; blk < spec.blocks(); ++blk)
            for (int m = 0; m < cfg.num_frames; ++m)
                for (int j = 0; j < cfg.window_size; ++j) {
                    const long idx = blk * stride + static_cast<long>(m) * cfg.hop_size -
                                     front + j;
                    const double x = (idx >= 0 && idx < n) ? b.samples[idx] : 0.0;
                    windowed += w[j] * x * w[j] * x;
                }

        const double expected_ratio =
            4.0 / (cfg.window_size * cfg.scale * cfg.scale);
        CHECK(spec_energy / windowed == Catch::Approx(expected_ratio).epsilon(1e-6));
    }
}

TEST_CASE("invalid configs and inputs are rejected") {
    AudioBuffer empty;
    CHECK_THROWS_WITH(stft(empty), Catch::Matchers::ContainsSubstring("empty buffer"));

    StftConfig bad_hop;
    bad_hop.hop_size = 1024;
    CHECK_THROWS_AS(bad_hop.validate(), ConfigError);

    StftConfig bad_win;
    bad_win.window_size = 500;
    CHECK_THROWS_AS(bad_win.validate(), ConfigError);

    StftConfig bad_scale;
    bad_scale.scale = 0.0;
    CHECK_THROWS_AS(bad_scale.validate(), ConfigError);

    AudioBuffer b;
    b.samples.assign(100, 0.0);
    ComplexSpectrogram spec = stft(b);
    spec.shape.bins = 17;  // inconsistent with the config
    spec.data.resize(spec.shape.count());
    CHECK_THROWS_AS(istft(spec), ConfigError);
}

TEST_CASE("channel stacking round trip") {
    std::mt19937_64 rng(5);
    const auto a = stft(testutil::random_buffer(rng, 3000));
    const auto b = stft(testutil::random_buffer(rng, 3000));
    const auto stacked = stack_channels({a, b});
    CHECK(stacked.shape.channels == 2);
    CHECK(extract_channel(stacked, 0).data == a.data);
    CHECK(extract_channel(stacked, 1).data == b.data);
    CHECK_THROWS_AS(extract_channel(stacked, 2), ConfigError);
}
