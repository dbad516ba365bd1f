#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ddrm/common.hpp"

namespace ddrm {

struct AudioBuffer {
    std::vector<double> samples;  // nominal range [-1, 1]
    int sample_rate = 8000;

    bool finite() const {
        for (double s : samples)
            if (!std::isfinite(s)) return false;
        return true;
    }
};

enum class WavFormat { Float32, Pcm16 };

struct WavWriteStats {
    std::size_t clipped = 0;  // samples outside [-1, 1] saturated (pcm16 only)
};

namespace detail {

inline std::uint32_t rd_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void wr_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
}
inline void wr_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
}
inline void wr_tag(std::vector<std::uint8_t>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

// Reads a mono PCM16 or IEEE-float32 RIFF/WAVE file.  Samples are normalized
// to [-1, 1] (PCM16 divides by 32768, so full-scale positive maps to
// 1 - 2^-15).
inline AudioBuffer read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open wav file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw IoError("not a RIFF/WAVE file: " + path);

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const std::uint8_t* data = nullptr;
    std::size_t data_len = 0;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = detail::rd_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + len > bytes.size()) throw IoError("truncated wav chunk in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw IoError("malformed fmt chunk in " + path);
            format = detail::rd_u16(bytes.data() + pos);
            channels = detail::rd_u16(bytes.data() + pos + 2);
            rate = detail::rd_u32(bytes.data() + pos + 4);
            bits = detail::rd_u16(bytes.data() + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_len = len;
            have_data = true;
        }
        pos += len + (len & 1);  // chunks are word aligned
    }
    if (!have_fmt || !have_data) throw IoError("missing fmt/data chunk in " + path);
    if (channels != 1)
        throw IoError("multichannel unsupported: " + path + " has " +
                      std::to_string(channels) + " channels");
    if (rate == 0) throw IoError("invalid sample rate in " + path);

    AudioBuffer buf;
    buf.sample_rate = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        buf.samples.resize(data_len / 2);
        for (std::size_t i = 0; i < buf.samples.size(); ++i) {
            const auto u = detail::rd_u16(data + 2 * i);
            buf.samples[i] = static_cast<std::int16_t>(u) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        buf.samples.resize(data_len / 4);
        for (std::size_t i = 0; i < buf.samples.size(); ++i) {
            const std::uint32_t u = detail::rd_u32(data + 4 * i);
            float x;
            std::memcpy(&x, &u, 4);
            if (!std::isfinite(x)) throw IoError("non-finite sample in " + path);
            buf.samples[i] = x;
        }
    } else {
        throw IoError("unsupported wav encoding (format=" + std::to_string(format) +
                      ", bits=" + std::to_string(bits) + "): " + path);
    }
    return buf;
}

inline WavWriteStats write_wav(const AudioBuffer& buf, const std::string& path,
                               WavFormat format = WavFormat::Float32) {
    if (!buf.finite()) throw IoError("refusing to write non-finite samples: " + path);
    WavWriteStats stats;
    const std::size_t n = buf.samples.size();
    const int bytes_per = format == WavFormat::Pcm16 ? 2 : 4;

    std::vector<std::uint8_t> out;
    out.reserve(44 + n * bytes_per);
    detail::wr_tag(out, "RIFF");
    detail::wr_u32(out, static_cast<std::uint32_t>(36 + n * bytes_per));
    detail::wr_tag(out, "WAVE");
    detail::wr_tag(out, "fmt ");
    detail::wr_u32(out, 16);
    detail::wr_u16(out, format == WavFormat::Pcm16 ? 1 : 3);
    detail::wr_u16(out, 1);
    detail::wr_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
    detail::wr_u32(out, static_cast<std::uint32_t>(buf.sample_rate * bytes_per));
    detail::wr_u16(out, static_cast<std::uint16_t>(bytes_per));
    detail::wr_u16(out, format == WavFormat::Pcm16 ? 16 : 32);
    detail::wr_tag(out, "data");
    detail::wr_u32(out, static_cast<std::uint32_t>(n * bytes_per));

    if (format == WavFormat::Pcm16) {
        for (double s : buf.samples) {
            if (s > 1.0 || s < -1.0) ++stats.clipped;
            long v = std::lround(s * 32768.0);
            if (v > 32767) v = 32767;
            if (v < -32768) v = -32768;
            detail::wr_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
        }
    } else {
        for (double s : buf.samples) {
            const float x = static_cast<float>(s);
            std::uint32_t u;
            std::memcpy(&u, &x, 4);
            detail::wr_u32(out, u);
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path);
    return stats;
}

// Elementwise sum of equal-length, equal-rate buffers.
inline AudioBuffer mix(const std::vector<AudioBuffer>& sources) {
    if (sources.empty()) throw ConfigError("mix: no sources");
    AudioBuffer out;
    out.sample_rate = sources.front().sample_rate;
    out.samples.assign(sources.front().samples.size(), 0.0);
    for (const auto& s : sources) {
        if (s.samples.size() != out.samples.size())
            throw ConfigError("mix: length mismatch");
        if (s.sample_rate != out.sample_rate)
            throw ConfigError("mix: sample rate mismatch");
        for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += s.samples[i];
    }
    return out;
}

}  // namespace ddrm
