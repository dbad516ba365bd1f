#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ddrm/common.hpp"
#include "ddrm/degradation.hpp"

namespace ddrm {

enum class ScheduleKind { Geometric, LinearBeta };

inline const char* to_string(ScheduleKind k) {
    return k == ScheduleKind::Geometric ? "geometric" : "linear-beta";
}

// Diffusion noise levels sigma_0 < sigma_1 < ... < sigma_T.
struct NoiseSchedule {
    std::vector<double> sigmas;

    int steps() const { return static_cast<int>(sigmas.size()) - 1; }
    double sigma(int t) const { return sigmas[t]; }
    double sigma_max() const { return sigmas.back(); }
    double sigma_min() const { return sigmas.front(); }
};

inline NoiseSchedule build_schedule(ScheduleKind kind, int steps, double sigma_min,
                                    double sigma_max) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    if (!(sigma_min >= 0.0) || !(sigma_min < sigma_max))
        throw ConfigError("schedule: need 0 <= sigma_min < sigma_max");

    NoiseSchedule out;
    out.sigmas.resize(steps + 1);
    if (kind == ScheduleKind::Geometric) {
        if (!(sigma_min > 0.0))
            throw ConfigError("schedule: geometric requires sigma_min > 0");
        for (int t = 0; t <= steps; ++t)
            out.sigmas[t] = sigma_min * std::pow(sigma_max / sigma_min,
                                                 static_cast<double>(t) / steps);
        out.sigmas[steps] = sigma_max;
    } else {
        // sigma'_t = sqrt((1 - abar_t)/abar_t) for a linear beta ramp, mapped
        // affinely onto [sigma_min, sigma_max].
        const double beta_lo = 1e-4, beta_hi = 2e-2;
        std::vector<double> sp(steps + 1, 0.0);
        double abar = 1.0;
        for (int t = 1; t <= steps; ++t) {
            const double beta =
                steps == 1 ? beta_hi
                           : beta_lo + (beta_hi - beta_lo) * (t - 1) / static_cast<double>(steps - 1);
            abar *= 1.0 - beta;
            sp[t] = std::sqrt((1.0 - abar) / abar);
        }
        for (int t = 0; t <= steps; ++t)
            out.sigmas[t] = sigma_min + (sigma_max - sigma_min) * sp[t] / sp[steps];
        out.sigmas[steps] = sigma_max;
    }
    for (int t = 0; t < steps; ++t)
        if (!(out.sigmas[t] < out.sigmas[t + 1]))
            throw ConfigError("schedule: sigmas must be strictly increasing");
    return out;
}

struct FeasibilityReport {
    bool feasible = true;
    int component = -1;      // offending spectral component, when infeasible
    double sigma_bar = 0.0;  // its largest effective noise std
};

// The initialization N(ybar, sigma_T^2 - sigma_bar^2) requires
// sigma_T >= sigma_bar everywhere.
inline FeasibilityReport check_feasibility(const NoiseSchedule& schedule,
                                           const SpectralMeasurement& spectral) {
    FeasibilityReport rep;
    const double st = schedule.sigma_max();
    for (int c = 0; c < spectral.ybar.shape.channels; ++c) {
        if (!spectral.observed[c]) continue;
        for (int k = 0; k < spectral.ybar.shape.bins; ++k)
            for (int l = 0; l < spectral.ybar.shape.frames; ++l) {
                const double sb = spectral.sigma_bar.at(c, k, l);
                if (sb > st && (rep.feasible || sb > rep.sigma_bar)) {
                    rep.feasible = false;
                    rep.component = c;
                    rep.sigma_bar = sb;
                }
            }
    }
    return rep;
}

inline void require_feasible(const NoiseSchedule& schedule, const SpectralMeasurement& spectral) {
    const auto rep = check_feasibility(schedule, spectral);
    if (!rep.feasible)
        throw InfeasibleError("schedule too small: sigma_T=" + std::to_string(schedule.sigma_max()) +
                              " < max sigma_bar=" + std::to_string(rep.sigma_bar) +
                              " (spectral component " + std::to_string(rep.component) + ")");
}

// Default sigma_max when the config leaves it unset: twice the largest
// spectral measurement noise, and at least 1.
inline double auto_sigma_max(const SpectralMeasurement& spectral) {
    return std::max(1.0, 2.0 * spectral.max_sigma_bar());
}

}  // namespace ddrm
