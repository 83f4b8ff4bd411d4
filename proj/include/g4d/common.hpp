#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace g4d {

// Error kinds surfaced by library operations. The CLI maps these to exit
// codes and stage-tagged messages.
enum class ErrorKind {
    MalformedFile,
    InvariantViolation,
    FrameOutOfRange,
    SizeMismatch,
    DimensionMismatch,
    DivisionDegenerate,
    EmptyInput,
    EmptyAnchorSet,
    NoAnchorsProduced,
    OracleSizeExceeded,
    NonFiniteLoss,
    IoFailure,
    BadConfig,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

const char* error_kind_name(ErrorKind kind);

// Deterministic RNG. splitmix64 keeps random streams identical across
// platforms and standard library versions, which the determinism contract
// requires for byte-identical artifacts.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller. Deterministic, one sample per call (the paired sample is
    // discarded to keep the stream layout simple).
    double normal(double mean = 0.0, double stddev = 1.0);

private:
    uint64_t state_;
};

// FNV-1a over the stage name, mixed with the run seed. All per-stage random
// streams derive from this so one config seed pins every artifact.
uint64_t derive_seed(uint64_t base_seed, const std::string& stage);

} // namespace g4d
