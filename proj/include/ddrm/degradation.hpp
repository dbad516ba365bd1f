#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ddrm/common.hpp"
#include "ddrm/tensor.hpp"

namespace ddrm {

// Minimal dense real matrix for the tiny (<= 64x64) observation operators.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    Matrix transposed() const {
        Matrix t(cols, rows);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }
    bool finite() const {
        for (double x : a)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

struct SvdResult {
    Matrix u;               // rows x rows, orthogonal
    std::vector<double> s;  // min(rows, cols), non-increasing
    Matrix v;               // cols x cols, orthogonal
};

namespace detail {

// One-sided Jacobi on the columns of b (rows >= cols), accumulating the right
// rotations into v.  On return the columns of b are orthogonal with norms
// equal to the singular values.
inline void jacobi_orthogonalize(Matrix& b, Matrix& v) {
    const int m = b.rows, n = b.cols;
    constexpr double eps = 1e-15;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int i = 0; i < m; ++i) {
                    app += b(i, p) * b(i, p);
                    aqq += b(i, q) * b(i, q);
                    apq += b(i, p) * b(i, q);
                }
                if (std::abs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (int i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    b(i, p) = cs * bp - sn * bq;
                    b(i, q) = sn * bp + cs * bq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = cs * vp - sn * vq;
                    v(i, q) = sn * vp + cs * vq;
                }
            }
        }
        if (!rotated) break;
    }
}

// Extends the orthonormal set in the first `have` columns of u to a full
// basis, deterministically: repeatedly orthogonalize the standard basis
// vector with the largest residual.
inline void complete_basis(Matrix& u, int have) {
    const int m = u.rows;
    for (int j = have; j < m; ++j) {
        int best_k = 0;
        double best_norm = -1.0;
        std::vector<double> best_res;
        for (int k = 0; k < m; ++k) {
            std::vector<double> r(m, 0.0);
            r[k] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (int c = 0; c < j; ++c) {
                    double dot = 0.0;
                    for (int i = 0; i < m; ++i) dot += r[i] * u(i, c);
                    for (int i = 0; i < m; ++i) r[i] -= dot * u(i, c);
                }
            }
            double nrm = 0.0;
            for (double x : r) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > best_norm + 1e-14) {
                best_norm = nrm;
                best_k = k;
                best_res = std::move(r);
            }
        }
        (void)best_k;
        for (int i = 0; i < m; ++i) u(i, j) = best_res[i] / best_norm;
    }
}

inline void flip_column_sign(Matrix& m, int j) {
    for (int i = 0; i < m.rows; ++i) m(i, j) = -m(i, j);
}

inline int argmax_abs_column(const Matrix& m, int j) {
    int arg = 0;
    double best = -1.0;
    for (int i = 0; i < m.rows; ++i) {
        const double a = std::abs(m(i, j));
        if (a > best + 0.0) {
            best = a;
            arg = i;
        }
    }
    return arg;
}

}  // namespace detail

// SVD h = u * diag(s) * v^T with a deterministic sign convention: the
// largest-magnitude entry of each right singular vector is positive.
inline SvdResult svd(const Matrix& h) {
    if (h.rows < 1 || h.cols < 1) throw ConfigError("svd: empty matrix");
    if (h.rows > 64 || h.cols > 64) throw ConfigError("svd: matrix larger than 64x64");
    if (!h.finite()) throw ConfigError("svd: non-finite entries");

    if (h.rows < h.cols) {
        SvdResult t = svd(h.transposed());
        return {t.v, std::move(t.s), t.u};
    }

    const int m = h.rows, n = h.cols;
    Matrix b = h;
    Matrix v = Matrix::identity(n);
    detail::jacobi_orthogonalize(b, v);

    std::vector<double> s(n);
    for (int j = 0; j < n; ++j) {
        double nrm = 0.0;
        for (int i = 0; i < m; ++i) nrm += b(i, j) * b(i, j);
        s[j] = std::sqrt(nrm);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return s[i] > s[j]; });

    SvdResult out;
    out.s.resize(n);
    out.u = Matrix(m, m);
    out.v = Matrix(n, n);
    double smax = 0.0;
    for (int j = 0; j < n; ++j) smax = std::max(smax, s[order[j]]);
    const double tiny = smax > 0.0 ? smax * 1e-13 : 0.0;

    int have = 0;
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        out.s[j] = s[src];
        for (int i = 0; i < n; ++i) out.v(i, j) = v(i, src);
        if (s[src] > tiny && have == j) {
            for (int i = 0; i < m; ++i) out.u(i, j) = b(i, src) / s[src];
            ++have;
        }
    }
    detail::complete_basis(out.u, have);

    for (int j = 0; j < n; ++j) {
        const int arg = detail::argmax_abs_column(out.v, j);
        if (out.v(arg, j) < 0.0) {
            detail::flip_column_sign(out.v, j);
            if (j < have) detail::flip_column_sign(out.u, j);
        }
    }
    for (int j = have; j < m; ++j) {
        const int arg = detail::argmax_abs_column(out.u, j);
        if (out.u(arg, j) < 0.0) detail::flip_column_sign(out.u, j);
    }
    return out;
}

// The linear observation operator with its SVD; applied identically to every
// time-frequency bin.
struct DegradationModel {
    Matrix h;               // measurements x sources
    Matrix u;               // M x M
    std::vector<double> s;  // N singular values, non-increasing
    Matrix v;               // N x N
    int rank = 0;

    int measurements() const { return h.rows; }
    int sources() const { return h.cols; }
    double rank_tolerance() const { return s.empty() ? 0.0 : 1e-9 * s.front(); }
    bool observed(int component) const {
        return component < static_cast<int>(s.size()) && s[component] > rank_tolerance();
    }
};

inline DegradationModel make_model(Matrix h) {
    DegradationModel m;
    m.h = std::move(h);
    SvdResult f = svd(m.h);
    m.u = std::move(f.u);
    m.s = std::move(f.s);
    m.v = std::move(f.v);
    m.rank = 0;
    for (std::size_t i = 0; i < m.s.size(); ++i)
        if (m.s[i] > m.rank_tolerance()) ++m.rank;

    // factorization invariants, scaled by the largest singular value
    const double scale = std::max(1.0, m.s.empty() ? 0.0 : m.s.front());
    for (int i = 0; i < m.h.rows; ++i)
        for (int j = 0; j < m.h.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m.s.size(); ++k) acc += m.u(i, k) * m.s[k] * m.v(j, k);
            if (std::abs(acc - m.h(i, j)) > 1e-10 * scale)
                throw ConfigError("degradation model: SVD reconstruction drift");
        }
    return m;
}

// Each estimate observed directly: h = I.
inline DegradationModel build_isolated(int n_sources) {
    if (n_sources < 1) throw ConfigError("build_isolated: need at least one source");
    return make_model(Matrix::identity(n_sources));
}

// Mixture row of ones stacked on top of the identity.
inline DegradationModel build_shared(int n_sources) {
    if (n_sources < 1) throw ConfigError("build_shared: need at least one source");
    Matrix h(n_sources + 1, n_sources);
    for (int j = 0; j < n_sources; ++j) {
        h(0, j) = 1.0;
        h(j + 1, j) = 1.0;
    }
    return make_model(std::move(h));
}

enum class ObservationDesign { Isolated, Shared };

// Stacked measurement channels with their per-bin noise std.  For the shared
// design channel 0 is the mixture, followed by the per-source estimates.
struct MeasurementSet {
    ComplexTensor y;
    RealTensor sigma_y;
    ObservationDesign design = ObservationDesign::Isolated;
};

// Measurements mapped to spectral coordinates, plus the effective per-bin
// noise std of each spectral component.
struct SpectralMeasurement {
    ComplexTensor ybar;      // [sources, bins, frames]
    RealTensor sigma_bar;    // same shape
    std::vector<bool> observed;  // per component; false where s_i ~ 0

    double max_sigma_bar() const {
        double m = 0.0;
        for (int c = 0; c < ybar.shape.channels; ++c) {
            if (!observed[c]) continue;
            for (int k = 0; k < ybar.shape.bins; ++k)
                for (int l = 0; l < ybar.shape.frames; ++l)
                    m = std::max(m, sigma_bar.at(c, k, l));
        }
        return m;
    }
};

// ybar = pinv(Sigma) U^T y per bin; noise propagated through the same map
// componentwise: sigma_bar_i^2 = sum_j (pinv(Sigma) U^T)_{ij}^2 sigma_j^2.
inline SpectralMeasurement to_spectral(const MeasurementSet& ms, const DegradationModel& model) {
    const int m = model.measurements();
    const int n = model.sources();
    if (ms.y.shape.channels != m)
        throw ConfigError("to_spectral: measurement channel count (" +
                          std::to_string(ms.y.shape.channels) + ") != H rows (" +
                          std::to_string(m) + ")");
    require_shape(ms.sigma_y.shape, ms.y.shape, "to_spectral: sigma_y");
    for (double s : ms.sigma_y.v)
        if (!(s >= 0.0)) throw ConfigError("to_spectral: sigma_y must be >= 0 everywhere");

    Matrix p(n, m);  // pinv(Sigma) U^T
    for (int i = 0; i < n; ++i) {
        if (!model.observed(i)) continue;
        for (int j = 0; j < m; ++j) p(i, j) = model.u(j, i) / model.s[i];
    }

    SpectralMeasurement out;
    const TensorShape shape{n, ms.y.shape.bins, ms.y.shape.frames};
    out.ybar = ComplexTensor(shape);
    out.sigma_bar = RealTensor(shape);
    out.observed.resize(n);
    for (int i = 0; i < n; ++i) out.observed[i] = model.observed(i);

    for (int k = 0; k < shape.bins; ++k) {
        for (int l = 0; l < shape.frames; ++l) {
            for (int i = 0; i < n; ++i) {
                if (!out.observed[i]) continue;
                std::complex<double> acc(0.0, 0.0);
                double var = 0.0;
                for (int j = 0; j < m; ++j) {
                    const double pij = p(i, j);
                    acc += pij * ms.y.at(j, k, l);
                    var += pij * pij * ms.sigma_y.at(j, k, l) * ms.sigma_y.at(j, k, l);
                }
                out.ybar.at(i, k, l) = acc;
                out.sigma_bar.at(i, k, l) = std::sqrt(var);
            }
        }
    }
    return out;
}

// x = V xbar per bin.
inline ComplexTensor from_spectral(const ComplexTensor& xbar, const DegradationModel& model) {
    const int n = model.sources();
    if (xbar.shape.channels != n) throw ConfigError("from_spectral: channel count != sources");
    ComplexTensor out(xbar.shape);
    for (int k = 0; k < xbar.shape.bins; ++k)
        for (int l = 0; l < xbar.shape.frames; ++l)
            for (int i = 0; i < n; ++i) {
                std::complex<double> acc(0.0, 0.0);
                for (int j = 0; j < n; ++j) acc += model.v(i, j) * xbar.at(j, k, l);
                out.at(i, k, l) = acc;
            }
    return out;
}

// xbar = V^T x per bin (states, not measurements).
inline ComplexTensor state_to_spectral(const ComplexTensor& x, const DegradationModel& model) {
    const int n = model.sources();
    if (x.shape.channels != n) throw ConfigError("state_to_spectral: channel count != sources");
    ComplexTensor out(x.shape);
    for (int k = 0; k < x.shape.bins; ++k)
        for (int l = 0; l < x.shape.frames; ++l)
            for (int i = 0; i < n; ++i) {
                std::complex<double> acc(0.0, 0.0);
                for (int j = 0; j < n; ++j) acc += model.v(j, i) * x.at(j, k, l);
                out.at(i, k, l) = acc;
            }
    return out;
}

// y = H x per bin.
inline ComplexTensor apply(const DegradationModel& model, const ComplexTensor& x) {
    const int m = model.measurements();
    const int n = model.sources();
    if (x.shape.channels != n) throw ConfigError("apply: channel count != sources");
    ComplexTensor out(TensorShape{m, x.shape.bins, x.shape.frames});
    for (int k = 0; k < x.shape.bins; ++k)
        for (int l = 0; l < x.shape.frames; ++l)
            for (int i = 0; i < m; ++i) {
                std::complex<double> acc(0.0, 0.0);
                for (int j = 0; j < n; ++j) acc += model.h(i, j) * x.at(j, k, l);
                out.at(i, k, l) = acc;
            }
    return out;
}

}  // namespace ddrm
