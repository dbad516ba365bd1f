#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ddrm/common.hpp"
#include "ddrm/protocol.hpp"
#include "ddrm/tensor.hpp"

namespace ddrm {

// Estimates the clean source stack from a noisy one at noise level sigma.
// Built-ins are pure functions; the external binding talks the wire protocol
// to a separate process (one request in flight at a time).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual ComplexTensor denoise(const ComplexTensor& xt, double sigma) = 0;
};

class IdentityDenoiser final : public Denoiser {
public:
    ComplexTensor denoise(const ComplexTensor& xt, double) override { return xt; }
};

// Returns a stored reference regardless of the input.  Test-only fixture for
// the sampler's fixed-point behavior; not a physical denoiser.
class OracleDenoiser final : public Denoiser {
public:
    explicit OracleDenoiser(ComplexTensor reference) : ref_(std::move(reference)) {}

    ComplexTensor denoise(const ComplexTensor& xt, double) override {
        require_shape(xt.shape, ref_.shape, "oracle denoiser");
        return ref_;
    }

private:
    ComplexTensor ref_;
};

// Exact posterior mean under an elementwise Gaussian prior N(mu0, tau^2):
//   E[x0 | xt] = (tau^2 xt + sigma^2 mu0) / (tau^2 + sigma^2)
// applied independently to real and imaginary parts.  mu0/tau may be given
// per element.
class GaussianAnalyticDenoiser final : public Denoiser {
public:
    GaussianAnalyticDenoiser(double mu0, double tau) : mu0_(mu0), tau_(tau) {
        if (!(tau > 0.0)) throw ConfigError("gaussian denoiser: tau must be > 0");
    }
    GaussianAnalyticDenoiser(RealTensor mu0_field, RealTensor tau_field)
        : mu0_field_(std::move(mu0_field)), tau_field_(std::move(tau_field)) {
        for (double t : tau_field_->v)
            if (!(t > 0.0)) throw ConfigError("gaussian denoiser: tau must be > 0");
    }

    ComplexTensor denoise(const ComplexTensor& xt, double sigma) override {
        if (mu0_field_) {
            require_shape(mu0_field_->shape, xt.shape, "gaussian denoiser mu0");
            require_shape(tau_field_->shape, xt.shape, "gaussian denoiser tau");
        }
        ComplexTensor out(xt.shape);
        const double s2 = sigma * sigma;
        for (std::size_t i = 0; i < xt.v.size(); ++i) {
            const double mu = mu0_field_ ? mu0_field_->v[i] : mu0_;
            const double tau = tau_field_ ? tau_field_->v[i] : tau_;
            const double t2 = tau * tau;
            const double w = t2 / (t2 + s2);
            out.v[i] = {w * xt.v[i].real() + (1.0 - w) * mu,
                        w * xt.v[i].imag() + (1.0 - w) * mu};
        }
        return out;
    }

private:
    double mu0_ = 0.0;
    double tau_ = 1.0;
    std::optional<RealTensor> mu0_field_;
    std::optional<RealTensor> tau_field_;
};

// Complex stacks cross the wire as 2 real channels (real, imaginary) per
// source: dims = [sources, 2, bins, frames], f32 row-major.
inline protocol::TensorFrame pack_request(const ComplexTensor& xt, double sigma) {
    protocol::TensorFrame f;
    f.dims = {static_cast<std::uint32_t>(xt.shape.channels), 2u,
              static_cast<std::uint32_t>(xt.shape.bins),
              static_cast<std::uint32_t>(xt.shape.frames)};
    f.sigma = sigma;
    f.payload.resize(2 * xt.v.size());
    const std::size_t per = static_cast<std::size_t>(xt.shape.bins) * xt.shape.frames;
    for (int c = 0; c < xt.shape.channels; ++c)
        for (std::size_t i = 0; i < per; ++i) {
            const auto& z = xt.v[c * per + i];
            f.payload[(2 * c + 0) * per + i] = static_cast<float>(z.real());
            f.payload[(2 * c + 1) * per + i] = static_cast<float>(z.imag());
        }
    return f;
}

inline ComplexTensor unpack_response(const protocol::TensorFrame& f, const TensorShape& want) {
    const std::vector<std::uint32_t> expect = {
        static_cast<std::uint32_t>(want.channels), 2u, static_cast<std::uint32_t>(want.bins),
        static_cast<std::uint32_t>(want.frames)};
    if (f.dims != expect) throw ProtocolError("response shape mismatch");
    ComplexTensor out(want);
    const std::size_t per = static_cast<std::size_t>(want.bins) * want.frames;
    for (int c = 0; c < want.channels; ++c)
        for (std::size_t i = 0; i < per; ++i)
            out.v[c * per + i] = {f.payload[(2 * c + 0) * per + i],
                                  f.payload[(2 * c + 1) * per + i]};
    return out;
}

struct ExternalEndpoint {
    std::vector<std::string> command;  // child process argv, or
    std::string address;               // host:port
    double timeout_s = protocol::kDefaultTimeoutSeconds;
};

class ExternalDenoiser final : public Denoiser {
public:
    explicit ExternalDenoiser(const ExternalEndpoint& ep) : timeout_s_(ep.timeout_s) {
        if (!ep.command.empty()) {
            child_ = std::make_unique<protocol::ChildProcess>(ep.command);
            stream_ = &child_->stream();
        } else if (!ep.address.empty()) {
            socket_ = protocol::connect_stream(ep.address);
            stream_ = &socket_;
        } else {
            throw ConfigError("external denoiser: need a command or an address");
        }
    }

    ComplexTensor denoise(const ComplexTensor& xt, double sigma) override {
        const auto resp = stream_->request(pack_request(xt, sigma), timeout_s_);
        return unpack_response(resp, xt.shape);
    }

private:
    double timeout_s_;
    std::unique_ptr<protocol::ChildProcess> child_;
    protocol::DuplexStream socket_;
    protocol::DuplexStream* stream_ = nullptr;
};

}  // namespace ddrm
