#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ddrm/common.hpp"
#include "ddrm/degradation.hpp"
#include "ddrm/denoiser.hpp"
#include "ddrm/rng.hpp"
#include "ddrm/schedule.hpp"
#include "ddrm/tensor.hpp"

namespace ddrm {

struct SamplerConfig {
    double eta = 0.85;
    double eta_b = 1.0;
    NoiseSchedule schedule;
    std::uint64_t seed = 0;
    bool record_trajectory = false;
    int trajectory_stride = 10;

    void validate() const {
        if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("sampler: eta must be in [0, 1]");
        if (!(eta_b >= 0.0 && eta_b <= 2.0)) throw ConfigError("sampler: eta_b must be in [0, 2]");
        if (schedule.sigmas.size() < 2) throw ConfigError("sampler: schedule is empty");
        if (trajectory_stride < 1) throw ConfigError("sampler: trajectory stride must be >= 1");
    }
};

struct StepDiagnostics {
    double sigma_t = 0.0;
    std::uint64_t low = 0;         // measurement-dominated branch
    std::uint64_t high = 0;        // schedule-noise-dominated branch
    std::uint64_t unobserved = 0;  // zero-singular-value components
};

struct RefinementResult {
    ComplexTensor x0;  // refined sources, original (pre-V) coordinates
    std::vector<StepDiagnostics> steps;
    std::vector<ComplexTensor> trajectory;  // spectral snapshots, optional
    std::uint64_t denoiser_calls = 0;
};

namespace detail {

// One RNG address per (component, bin); event 0 is the initialization, event
// T - t the step that produces xbar_t.  Real and imaginary parts take the two
// halves of the Box-Muller pair, which keeps every draw independent of
// execution order.
inline std::uint64_t rng_stream(const TensorShape& shape, int c, int k, int l) {
    return (static_cast<std::uint64_t>(c) * shape.bins + k) * shape.frames + l;
}

}  // namespace detail

// xbar_T = ybar + sqrt(sigma_T^2 - sigma_bar^2) eps for observed components,
// sigma_T * eps for unobserved ones.
inline ComplexTensor initialize(const SpectralMeasurement& spectral,
                                const NoiseSchedule& schedule, const CounterRng& rng) {
    require_feasible(schedule, spectral);
    const double st = schedule.sigma_max();
    const TensorShape shape = spectral.ybar.shape;
    ComplexTensor x(shape);
    for (int c = 0; c < shape.channels; ++c)
        for (int k = 0; k < shape.bins; ++k)
            for (int l = 0; l < shape.frames; ++l) {
                const auto [er, ei] = rng.normal_pair(detail::rng_stream(shape, c, k, l), 0);
                if (spectral.observed[c]) {
                    const double sb = spectral.sigma_bar.at(c, k, l);
                    const double sd = std::sqrt(std::max(st * st - sb * sb, 0.0));
                    x.at(c, k, l) = spectral.ybar.at(c, k, l) +
                                    std::complex<double>(sd * er, sd * ei);
                } else {
                    x.at(c, k, l) = {st * er, st * ei};
                }
            }
    return x;
}

// One reverse step t+1 -> t in spectral coordinates.  Per component i and bin:
//
//   sigma_t <  sigma_bar_i : N(xth + sqrt(1-eta^2) sigma_t (ybar - xth)/sigma_bar_i,
//                              eta^2 sigma_t^2)
//   sigma_t >= sigma_bar_i : N((1-eta_b) xth + eta_b ybar,
//                              sigma_t^2 - sigma_bar_i^2 eta_b^2)
//   unobserved (s_i = 0)   : N(xth + sqrt(1-eta^2) sigma_t (x_{t+1} - xth)/sigma_{t+1},
//                              eta^2 sigma_t^2)
inline ComplexTensor step(const ComplexTensor& xbar_next, const ComplexTensor& xbar_theta,
                          const SpectralMeasurement& spectral, int t, const SamplerConfig& cfg,
                          const CounterRng& rng, StepDiagnostics* diag = nullptr) {
    const int steps = cfg.schedule.steps();
    if (t < 0 || t >= steps) throw ConfigError("sampler step: t out of range");
    const TensorShape shape = spectral.ybar.shape;
    require_shape(xbar_next.shape, shape, "sampler step: x_{t+1}");
    require_shape(xbar_theta.shape, shape, "sampler step: x_theta");

    const double sigma_t = cfg.schedule.sigma(t);
    const double sigma_next = cfg.schedule.sigma(t + 1);
    const double dir = std::sqrt(1.0 - cfg.eta * cfg.eta);
    const std::uint64_t event = static_cast<std::uint64_t>(steps - t);
    if (diag) diag->sigma_t = sigma_t;

    ComplexTensor out(shape);
    for (int c = 0; c < shape.channels; ++c) {
        const bool observed = spectral.observed[c];
        for (int k = 0; k < shape.bins; ++k)
            for (int l = 0; l < shape.frames; ++l) {
                const auto xth = xbar_theta.at(c, k, l);
                std::complex<double> mean;
                double sd;
                if (!observed) {
                    mean = xth + dir * sigma_t * (xbar_next.at(c, k, l) - xth) / sigma_next;
                    sd = cfg.eta * sigma_t;
                    if (diag) ++diag->unobserved;
                } else {
                    const double sb = spectral.sigma_bar.at(c, k, l);
                    if (sigma_t < sb) {
                        mean = xth + dir * sigma_t * (spectral.ybar.at(c, k, l) - xth) / sb;
                        sd = cfg.eta * sigma_t;
                        if (diag) ++diag->low;
                    } else {
                        const double var = sigma_t * sigma_t - sb * sb * cfg.eta_b * cfg.eta_b;
                        if (var < 0.0)
                            throw ConfigError(
                                "sampler step: negative variance in the high-noise branch "
                                "(eta_b > 1 with sigma_t close to sigma_bar)");
                        mean = (1.0 - cfg.eta_b) * xth + cfg.eta_b * spectral.ybar.at(c, k, l);
                        sd = std::sqrt(var);
                        if (diag) ++diag->high;
                    }
                }
                const auto [er, ei] = rng.normal_pair(detail::rng_stream(shape, c, k, l), event);
                out.at(c, k, l) = mean + std::complex<double>(sd * er, sd * ei);
            }
    }
    return out;
}

// Full Algorithm-1 run: project measurements to spectral space, initialize,
// then iterate { project to original space, denoise, project back, sample }.
// Exactly schedule.steps() denoiser calls; bit-reproducible for a fixed seed.
inline RefinementResult run(const MeasurementSet& measurements, const DegradationModel& model,
                            Denoiser& denoiser, const SamplerConfig& cfg) {
    cfg.validate();
    const SpectralMeasurement spectral = to_spectral(measurements, model);
    const CounterRng rng(cfg.seed);
    const int steps = cfg.schedule.steps();

    RefinementResult result;
    result.steps.resize(steps);

    ComplexTensor xbar = initialize(spectral, cfg.schedule, rng);
    for (int t = steps - 1; t >= 0; --t) {
        const ComplexTensor xt = from_spectral(xbar, model);
        ComplexTensor x_theta;
        try {
            x_theta = denoiser.denoise(xt, cfg.schedule.sigma(t + 1));
        } catch (const ProtocolError& e) {
            throw ProtocolError(std::string(e.what()) + " (denoiser call at step " +
                                std::to_string(t + 1) + ")");
        }
        ++result.denoiser_calls;
        require_shape(x_theta.shape, xt.shape, "denoiser output");
        if (!x_theta.finite())
            throw ConfigError("denoiser output is not finite at step " + std::to_string(t + 1));
        const ComplexTensor xbar_theta = state_to_spectral(x_theta, model);
        xbar = step(xbar, xbar_theta, spectral, t, cfg, rng, &result.steps[t]);
        if (cfg.record_trajectory && (t % cfg.trajectory_stride == 0))
            result.trajectory.push_back(xbar);
    }
    result.x0 = from_spectral(xbar, model);
    return result;
}

}  // namespace ddrm
