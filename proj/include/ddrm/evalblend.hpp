#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ddrm/audio.hpp"
#include "ddrm/common.hpp"

namespace ddrm {

inline constexpr double kSiSdrCapDb = 100.0;

// Scale-invariant SDR in dB: the estimate is projected onto the reference and
// the residual counts as distortion.  Capped at +/-100 dB.
inline double si_sdr(const AudioBuffer& estimate, const AudioBuffer& reference) {
    if (estimate.samples.size() != reference.samples.size())
        throw ConfigError("si_sdr: length mismatch");
    double rr = 0.0, er = 0.0;
    for (std::size_t i = 0; i < reference.samples.size(); ++i) {
        rr += reference.samples[i] * reference.samples[i];
        er += estimate.samples[i] * reference.samples[i];
    }
    if (rr == 0.0) throw ConfigError("si_sdr: zero reference");
    const double alpha = er / rr;
    double target = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < reference.samples.size(); ++i) {
        const double t = alpha * reference.samples[i];
        const double e = estimate.samples[i] - t;
        target += t * t;
        noise += e * e;
    }
    if (noise <= 0.0 || target / noise >= 1e10) return kSiSdrCapDb;
    if (target <= 0.0 || noise / target >= 1e10) return -kSiSdrCapDb;
    return 10.0 * std::log10(target / noise);
}

struct EvalReport {
    std::vector<double> per_source_db;  // indexed by reference
    std::vector<int> permutation;       // permutation[j] = estimate matched to reference j
    double mean_db = 0.0;
};

// Exhaustive permutation search (N <= 4), maximizing the mean SI-SDR.
inline EvalReport eval_permuted(const std::vector<AudioBuffer>& estimates,
                                const std::vector<AudioBuffer>& references) {
    const int n = static_cast<int>(references.size());
    if (n == 0 || static_cast<int>(estimates.size()) != n)
        throw ConfigError("eval: estimate/reference count mismatch");
    if (n > 4) throw ConfigError("eval: more than 4 sources, permutation search is exhaustive");

    std::vector<std::vector<double>> score(n, std::vector<double>(n));
    for (int e = 0; e < n; ++e)
        for (int r = 0; r < n; ++r) score[e][r] = si_sdr(estimates[e], references[r]);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    EvalReport best;
    best.mean_db = -1e300;
    do {
        double mean = 0.0;
        for (int r = 0; r < n; ++r) mean += score[perm[r]][r];
        mean /= n;
        if (mean > best.mean_db) {
            best.mean_db = mean;
            best.permutation = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    best.per_source_db.resize(n);
    for (int r = 0; r < n; ++r) best.per_source_db[r] = score[best.permutation[r]][r];
    return best;
}

// Convex combination xi * discriminative + (1 - xi) * generative, in the time
// domain.  Endpoints return the corresponding input bitwise.
inline AudioBuffer blend(const AudioBuffer& discriminative, const AudioBuffer& generative,
                         double xi) {
    if (!(xi >= 0.0 && xi <= 1.0)) throw ConfigError("blend: xi must be in [0, 1]");
    if (discriminative.samples.size() != generative.samples.size())
        throw ConfigError("blend: length mismatch");
    if (xi == 1.0) return discriminative;
    if (xi == 0.0) return generative;
    AudioBuffer out;
    out.sample_rate = discriminative.sample_rate;
    out.samples.resize(discriminative.samples.size());
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = xi * discriminative.samples[i] + (1.0 - xi) * generative.samples[i];
    return out;
}

struct BlendPoint {
    double xi = 0.0;
    EvalReport report;
};

// Evaluates the blend across the xi grid {0, step, ..., 1}.
inline std::vector<BlendPoint> blend_sweep(const std::vector<AudioBuffer>& discriminative,
                                           const std::vector<AudioBuffer>& generative,
                                           const std::vector<AudioBuffer>& references,
                                           double step = 0.1) {
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("blend_sweep: bad step");
    if (discriminative.size() != generative.size())
        throw ConfigError("blend_sweep: source count mismatch");
    const int points = static_cast<int>(std::lround(1.0 / step));
    std::vector<BlendPoint> out;
    for (int i = 0; i <= points; ++i) {
        const double xi = std::min(1.0, i * step);
        std::vector<AudioBuffer> blended;
        blended.reserve(discriminative.size());
        for (std::size_t s = 0; s < discriminative.size(); ++s)
            blended.push_back(blend(discriminative[s], generative[s], xi));
        out.push_back({xi, eval_permuted(blended, references)});
    }
    return out;
}

}  // namespace ddrm
