#pragma once

#include <cmath>
#include <cstddef>

#include "ddrm/common.hpp"
#include "ddrm/tensor.hpp"

namespace ddrm {

// Measurement-noise design for the per-source channels.  The sigmoid variant
// raises the noise std (lowers trust in the preceding estimate) where the
// mixture and the estimate disagree:
//
//   sigma(k,l) = alpha / (1 + exp(-beta * |m - xhat|)) - gamma
//
// The mixture channel, when present, always uses mixture_value.
struct VarianceDesign {
    enum class Kind { Fixed, Sigmoid };
    Kind kind = Kind::Fixed;
    double fixed_value = 0.5;
    double alpha = 2.0;
    double beta = 2.0;
    double gamma = 0.8;
    double mixture_value = 0.5;

    void validate() const {
        if (kind == Kind::Fixed && !(fixed_value >= 0.0))
            throw ConfigError("variance: fixed value must be >= 0");
        if (kind == Kind::Sigmoid) {
            if (!(alpha / 2.0 - gamma >= 0.0))
                throw ConfigError("variance: need alpha/2 - gamma >= 0");
            if (!(alpha - gamma >= 0.0))
                throw ConfigError("variance: need alpha - gamma >= 0");
        }
        if (!(mixture_value >= 0.0))
            throw ConfigError("variance: mixture value must be >= 0");
    }
};

struct SigmoidStats {
    std::size_t clamped = 0;  // bins where a negative std was clamped to 0
};

inline RealTensor fixed_field(TensorShape shape, double value) {
    if (!(value >= 0.0)) throw ConfigError("fixed_field: value must be >= 0");
    return RealTensor(shape, value);
}

inline double sigmoid_std(double diff_magnitude, const VarianceDesign& d) {
    return d.alpha / (1.0 + std::exp(-d.beta * diff_magnitude)) - d.gamma;
}

// Per-bin noise std for one source channel from the complex magnitude of the
// mixture/estimate difference.
inline RealTensor sigmoid_field(const ComplexTensor& mixture, const ComplexTensor& estimate,
                                const VarianceDesign& d, SigmoidStats* stats = nullptr) {
    require_shape(estimate.shape, mixture.shape, "sigmoid_field");
    if (mixture.shape.channels != 1)
        throw ConfigError("sigmoid_field: expects single-channel tensors");
    RealTensor out(mixture.shape);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        double s = sigmoid_std(std::abs(mixture.v[i] - estimate.v[i]), d);
        if (s < 0.0) {
            s = 0.0;
            if (stats) ++stats->clamped;
        }
        out.v[i] = s;
    }
    return out;
}

}  // namespace ddrm
