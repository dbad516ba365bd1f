#pragma once

#include <stdexcept>
#include <string>

namespace ddrm {

inline constexpr const char* kProjectName = "ddrm-refine";
inline constexpr const char* kProjectVersion = "0.1.0";

// Error hierarchy; the CLI maps these onto process exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration / invalid arguments.  Exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// File and audio I/O failures.  Exit code 3.
struct IoError : Error {
    using Error::Error;
};

// Denoiser wire-protocol violations and transport failures.  Exit code 4.
struct ProtocolError : Error {
    using Error::Error;
};

// Numerical infeasibility (noise schedule does not dominate the
// measurement noise).  Exit code 5.
struct InfeasibleError : Error {
    using Error::Error;
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const ProtocolError*>(&e)) return 4;
    if (dynamic_cast<const InfeasibleError*>(&e)) return 5;
    return 1;
}

}  // namespace ddrm
