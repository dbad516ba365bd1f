#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "ddrm/common.hpp"

namespace ddrm {

// Shape of the [channel, frequency bin, time frame] tensors used throughout.
struct TensorShape {
    int channels = 0;
    int bins = 0;
    int frames = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(channels) * bins * frames;
    }
    std::size_t index(int c, int k, int l) const {
        return (static_cast<std::size_t>(c) * bins + k) * frames + l;
    }
    bool operator==(const TensorShape& o) const = default;
};

struct ComplexTensor {
    TensorShape shape;
    std::vector<std::complex<double>> v;

    ComplexTensor() = default;
    explicit ComplexTensor(TensorShape s) : shape(s), v(s.count()) {}

    std::complex<double>& at(int c, int k, int l) { return v[shape.index(c, k, l)]; }
    const std::complex<double>& at(int c, int k, int l) const { return v[shape.index(c, k, l)]; }

    bool finite() const {
        for (const auto& z : v)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
        return true;
    }
};

struct RealTensor {
    TensorShape shape;
    std::vector<double> v;

    RealTensor() = default;
    explicit RealTensor(TensorShape s, double fill = 0.0) : shape(s), v(s.count(), fill) {}

    double& at(int c, int k, int l) { return v[shape.index(c, k, l)]; }
    const double& at(int c, int k, int l) const { return v[shape.index(c, k, l)]; }
};

inline void require_shape(const TensorShape& got, const TensorShape& want, const char* what) {
    if (!(got == want))
        throw ConfigError(std::string(what) + ": shape mismatch");
}

}  // namespace ddrm
