#include "g4d/common.hpp"

#include <cmath>

namespace g4d {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::FrameOutOfRange: return "FrameOutOfRange";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DivisionDegenerate: return "DivisionDegenerate";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyAnchorSet: return "EmptyAnchorSet";
    case ErrorKind::NoAnchorsProduced: return "NoAnchorsProduced";
    case ErrorKind::OracleSizeExceeded: return "OracleSizeExceeded";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

double Rng::normal(double mean, double stddev) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

uint64_t derive_seed(uint64_t base_seed, const std::string& stage) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    // One splitmix round decorrelates stage hashes that differ in few bits.
    uint64_t z = h ^ (base_seed + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace g4d
