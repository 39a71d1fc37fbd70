#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace mapose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base type for all recoverable library failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonPositiveDepth : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct ImageTooSmall : Error { using Error::Error; };
struct InsufficientPoints : Error { using Error::Error; };
struct DegenerateConfiguration : Error { using Error::Error; };
struct NoConsensus : Error { using Error::Error; };
struct MalformedFile : Error { using Error::Error; };
struct ChannelCountMismatch : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct EmptyKeypoints : Error { using Error::Error; };
struct DegenerateGroundTruthTranslation : Error { using Error::Error; };
struct FrustumRejectionExceeded : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct MissingMeta : Error { using Error::Error; };
struct SchemaViolation : Error { using Error::Error; };
struct BboxInvariantViolation : Error { using Error::Error; };

/// Minimum camera-frame depth accepted by the projection model.
inline constexpr double kDepthEpsilon = 1e-6;

inline std::uint64_t mix_bits(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives an independent seed from a base seed and any number of stream
/// indices (sequence, frame, keypoint, ...). Same inputs, same seed.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, Parts... parts) {
    std::uint64_t h = mix_bits(base + 0x9e3779b97f4a7c15ull);
    ((h = mix_bits(h ^ (static_cast<std::uint64_t>(parts) + 0x9e3779b97f4a7c15ull))), ...);
    return h;
}

/// Seeded random stream with fully specified output: mt19937_64 core,
/// explicit bit-to-double conversion and Box-Muller normals, so sequences
/// do not depend on standard-library distribution internals.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller, one cached value per pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Unbiased uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    Vec3 unit_vector() {
        while (true) {
            Vec3 v{normal(), normal(), normal()};
            const double n = v.norm();
            if (n > 1e-12) return v / n;
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mapose
