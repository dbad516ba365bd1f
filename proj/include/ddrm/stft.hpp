#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ddrm/audio.hpp"
#include "ddrm/common.hpp"
#include "ddrm/tensor.hpp"

namespace ddrm {

// Analysis parameters for the fixed-size complex STFT feature.
//
// The feature tensor always spans num_frames frames per block; longer signals
// are analyzed in blocks that overlap by one hop and are rejoined with a
// one-hop linear crossfade on synthesis.  Coefficients are stored as
// (2 / window_size) * DFT(window .* frame) / scale, which puts a unit
// sinusoid at roughly 0.5/scale.
struct StftConfig {
    int window_size = 512;
    int hop_size = 256;
    int num_frames = 256;
    double scale = 0.15;

    int bins() const { return window_size / 2 + 1; }
    int block_samples() const { return hop_size * num_frames; }
    int block_stride() const { return hop_size * (num_frames - 1); }

    void validate() const;
};

struct ComplexSpectrogram {
    TensorShape shape;  // [channels, window/2+1, blocks*num_frames]
    std::vector<std::complex<double>> data;
    StftConfig cfg;
    long num_samples = 0;  // original waveform length
    int sample_rate = 8000;

    std::complex<double>& at(int c, int k, int l) { return data[shape.index(c, k, l)]; }
    const std::complex<double>& at(int c, int k, int l) const { return data[shape.index(c, k, l)]; }
    int blocks() const { return shape.frames / cfg.num_frames; }

    ComplexTensor tensor() const {
        ComplexTensor t(shape);
        t.v = data;
        return t;
    }
    ComplexSpectrogram with_tensor(const ComplexTensor& t) const {
        require_shape(t.shape, shape, "with_tensor");
        ComplexSpectrogram s = *this;
        s.data = t.v;
        return s;
    }
};

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT, e^{-2*pi*i*k*n/N} convention.
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& z : a) z /= static_cast<double>(n);
}

inline std::vector<double> hann_periodic(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    return w;
}

}  // namespace detail

inline void StftConfig::validate() const {
    if (!detail::is_pow2(window_size) || window_size < 2)
        throw ConfigError("stft: window_size must be a power of two >= 2");
    if (hop_size < 1 || hop_size > window_size)
        throw ConfigError("stft: hop_size must be in [1, window_size]");
    if (num_frames < 1) throw ConfigError("stft: num_frames must be >= 1");
    if (!(scale > 0.0)) throw ConfigError("stft: scale must be positive");
    // Overlap-add of the window must be flat in steady state (checked over one
    // hop period; Hann at 50% overlap sums to 1 exactly).
    const auto w = detail::hann_periodic(window_size);
    double lo = 1e300, hi = -1e300;
    for (int p = 0; p < hop_size; ++p) {
        double s = 0.0;
        for (int j = p; j < window_size; j += hop_size) s += w[j];
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    if (hi - lo > 1e-10)
        throw ConfigError("stft: window/hop pair violates the overlap-add condition");
}

inline ComplexSpectrogram stft(const AudioBuffer& buf, const StftConfig& cfg = {}) {
    cfg.validate();
    if (buf.samples.empty()) throw ConfigError("stft: empty buffer");
    if (!buf.finite()) throw ConfigError("stft: non-finite samples");

    const int win = cfg.window_size;
    const int hop = cfg.hop_size;
    const long n = static_cast<long>(buf.samples.size());
    const long payload = cfg.block_samples();
    const long stride = cfg.block_stride();
    const int blocks =
        n <= payload ? 1 : 1 + static_cast<int>((n - payload + stride - 1) / stride);

    ComplexSpectrogram spec;
    spec.cfg = cfg;
    spec.num_samples = n;
    spec.sample_rate = buf.sample_rate;
    spec.shape = {1, cfg.bins(), blocks * cfg.num_frames};
    spec.data.assign(spec.shape.count(), {0.0, 0.0});

    const auto w = detail::hann_periodic(win);
    const int front_pad = win - hop;
    const double norm = 2.0 / (win * cfg.scale);
    std::vector<std::complex<double>> frame(win);

    for (int b = 0; b < blocks; ++b) {
        const long start = static_cast<long>(b) * stride;
        for (int m = 0; m < cfg.num_frames; ++m) {
            for (int j = 0; j < win; ++j) {
                const long idx = start + static_cast<long>(m) * hop - front_pad + j;
                const double x = (idx >= 0 && idx < n) ? buf.samples[idx] : 0.0;
                frame[j] = w[j] * x;
            }
            detail::fft(frame);
            for (int k = 0; k <= win / 2; ++k)
                spec.at(0, k, b * cfg.num_frames + m) = norm * frame[k];
        }
    }
    return spec;
}

inline AudioBuffer istft(const ComplexSpectrogram& spec) {
    const StftConfig& cfg = spec.cfg;
    cfg.validate();
    if (spec.shape.channels != 1)
        throw ConfigError("istft: expected a single channel (use extract_channel)");
    if (spec.shape.bins != cfg.bins() || spec.shape.frames % cfg.num_frames != 0)
        throw ConfigError("istft: spectrogram shape inconsistent with its config");
    if (static_cast<std::size_t>(spec.shape.count()) != spec.data.size())
        throw ConfigError("istft: data size mismatch");

    const int win = cfg.window_size;
    const int hop = cfg.hop_size;
    const int blocks = spec.blocks();
    const long payload = cfg.block_samples();
    const long stride = cfg.block_stride();
    const auto w = detail::hann_periodic(win);
    const int front_pad = win - hop;
    const long padded = static_cast<long>(cfg.num_frames - 1) * hop + win;
    const double denorm = win * cfg.scale / 2.0;

    AudioBuffer out;
    out.sample_rate = spec.sample_rate;
    out.samples.assign(spec.num_samples, 0.0);

    std::vector<std::complex<double>> full(win);
    std::vector<double> num(padded), den(padded), block_out(payload);

    for (int b = 0; b < blocks; ++b) {
        std::fill(num.begin(), num.end(), 0.0);
        std::fill(den.begin(), den.end(), 0.0);
        for (int m = 0; m < cfg.num_frames; ++m) {
            for (int k = 0; k <= win / 2; ++k)
                full[k] = denorm * spec.at(0, k, b * cfg.num_frames + m);
            for (int k = 1; k < win / 2; ++k) full[win - k] = std::conj(full[k]);
            detail::fft(full, /*inverse=*/true);
            const long off = static_cast<long>(m) * hop;
            for (int j = 0; j < win; ++j) {
                num[off + j] += full[j].real() * w[j];
                den[off + j] += w[j] * w[j];
            }
        }
        for (long i = 0; i < payload; ++i) {
            const double d = den[front_pad + i];
            block_out[i] = d > 1e-12 ? num[front_pad + i] / d : 0.0;
        }
        // Rejoin blocks with a linear crossfade over the one-hop overlap.
        const long start = static_cast<long>(b) * stride;
        for (long i = 0; i < payload; ++i) {
            const long pos = start + i;
            if (pos >= spec.num_samples) break;
            if (b > 0 && i < hop) {
                const double r = (static_cast<double>(i) + 1.0) / (hop + 1.0);
                out.samples[pos] = (1.0 - r) * out.samples[pos] + r * block_out[i];
            } else {
                out.samples[pos] = block_out[i];
            }
        }
    }
    return out;
}

inline ComplexSpectrogram stack_channels(const std::vector<ComplexSpectrogram>& parts) {
    if (parts.empty()) throw ConfigError("stack_channels: no inputs");
    ComplexSpectrogram out = parts.front();
    for (const auto& p : parts) {
        if (!(p.shape == parts.front().shape))
            throw ConfigError("stack_channels: shape mismatch");
        if (p.num_samples != parts.front().num_samples)
            throw ConfigError("stack_channels: length mismatch");
    }
    out.shape.channels = static_cast<int>(parts.size());
    out.data.resize(out.shape.count());
    for (std::size_t c = 0; c < parts.size(); ++c)
        std::copy(parts[c].data.begin(), parts[c].data.end(),
                  out.data.begin() + c * parts[c].shape.count());
    return out;
}

inline ComplexSpectrogram extract_channel(const ComplexSpectrogram& spec, int c) {
    if (c < 0 || c >= spec.shape.channels) throw ConfigError("extract_channel: bad index");
    ComplexSpectrogram out = spec;
    out.shape.channels = 1;
    out.data.assign(spec.data.begin() + static_cast<std::size_t>(c) * out.shape.count(),
                    spec.data.begin() + static_cast<std::size_t>(c + 1) * out.shape.count());
    return out;
}

}  // namespace ddrm
