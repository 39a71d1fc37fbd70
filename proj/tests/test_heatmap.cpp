#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "mapose/heatmap.hpp"

using namespace mapose;

namespace {

double catmull_rom(double p0, double p1, double p2, double p3, double t) {
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
}

double sample_clamped(const Heatmap& hm, int x, int y) {
    x = std::clamp(x, 0, hm.width - 1);
    y = std::clamp(y, 0, hm.height - 1);
    return static_cast<double>(hm.at(x, y));
}

// Cubic resampling oracle. Positive stencils are interpolated in log space
// (exact for Gaussian fields); stencils touching zero fall back to plain
// cubic, where values are vanishingly small anyway.
double resample_cubic(const Heatmap& hm, double x, double y) {
    const int x1 = static_cast<int>(std::floor(x));
    const int y1 = static_cast<int>(std::floor(y));
    const double tx = x - x1, ty = y - y1;
    double patch[4][4];
    bool positive = true;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            patch[j][i] = sample_clamped(hm, x1 - 1 + i, y1 - 1 + j);
            positive = positive && patch[j][i] > 0.0;
        }
    if (positive) {
        double rows[4];
        for (int j = 0; j < 4; ++j)
            rows[j] = catmull_rom(std::log(patch[j][0]), std::log(patch[j][1]), std::log(patch[j][2]),
                                  std::log(patch[j][3]), tx);
        return std::exp(catmull_rom(rows[0], rows[1], rows[2], rows[3], ty));
    }
    double rows[4];
    for (int j = 0; j < 4; ++j) rows[j] = catmull_rom(patch[j][0], patch[j][1], patch[j][2], patch[j][3], tx);
    return std::max(0.0, catmull_rom(rows[0], rows[1], rows[2], rows[3], ty));
}

// Rotates a heatmap about `center` by `angle` and renormalizes the grid
// maximum to 1, matching the encoder's peak convention.
Heatmap rotate_about(const Heatmap& hm, const Vec2& center, double angle) {
    Heatmap out = Heatmap::zeros(hm.width, hm.height);
    const double c = std::cos(-angle), s = std::sin(-angle);
    std::vector<double> dense(out.values.size());
    double max_value = 0.0;
    for (int y = 0; y < hm.height; ++y)
        for (int x = 0; x < hm.width; ++x) {
            const double dx = x - center.x(), dy = y - center.y();
            const double sx = center.x() + c * dx - s * dy;
            const double sy = center.y() + s * dx + c * dy;
            const double v = resample_cubic(hm, sx, sy);
            dense[static_cast<size_t>(y) * hm.width + x] = v;
            max_value = std::max(max_value, v);
        }
    const double norm = max_value > 0.0 ? 1.0 / max_value : 0.0;
    for (size_t i = 0; i < dense.size(); ++i) out.values[i] = static_cast<float>(dense[i] * norm);
    return out;
}

double max_abs_difference(const Heatmap& a, const Heatmap& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
    return m;
}

}  // namespace

TEST_CASE("heatmap coordinate scaling") {
    MotionEncodingParams params;
    REQUIRE(to_heatmap_coords({128.0, 128.0}, params) == Vec2{32.0, 32.0});
    REQUIRE(to_heatmap_coords({0.0, 0.0}, params) == Vec2{0.0, 0.0});
    const Vec2 p{64.0, 192.0};  // divisible by the 4x scale
    REQUIRE(to_image_coords(to_heatmap_coords(p, params), params) == p);
}

TEST_CASE("encode_circular analytic values") {
    MotionEncodingParams params;
    SECTION("grid-point center peaks at exactly 1") {
        const Heatmap hm = encode_circular({10.0, 20.0}, params);
        REQUIRE(hm.at(10, 20) == 1.0f);
        const auto det = decode(hm);
        REQUIRE(det);
        REQUIRE(det->position.x() == Approx(10.0).margin(1e-9));
        REQUIRE(det->position.y() == Approx(20.0).margin(1e-9));
        REQUIRE(det->confidence == 1.0);
    }
    SECTION("value at one sigma") {
        const Heatmap hm = encode_circular({10.0, 20.0}, params);
        REQUIRE(hm.at(12, 20) == Approx(std::exp(-0.5)).margin(1e-6));
    }
    SECTION("out-of-bounds keypoint yields the invisible map") {
        const Heatmap hm = encode_circular({-5.0, 10.0}, params);
        REQUIRE(hm.peak_amplitude == 0.0f);
        for (float v : hm.values) REQUIRE(v == 0.0f);
        REQUIRE_FALSE(decode(hm));
    }
}

TEST_CASE("encode_motion_aware fallback and orientation") {
    MotionEncodingParams params;
    SECTION("sub-threshold displacement is bitwise-identical to circular") {
        const Heatmap circ = encode_circular({30.5, 31.25}, params);
        const Heatmap ma = encode_motion_aware({30.5, 31.25}, {0.5, 0.0}, params);
        REQUIRE(ma.values == circ.values);
    }
    SECTION("major axis follows the displacement") {
        const Heatmap hm = encode_motion_aware({32.0, 32.0}, {8.0, 0.0}, params);
        REQUIRE(hm.at(34, 32) > hm.at(32, 34));
    }
    SECTION("diagonal displacement equals the rotated axis-aligned encoding") {
        const Vec2 kp{32.0, 32.0};
        const Heatmap diag = encode_motion_aware(kp, {5.0, 5.0}, params);
        const Heatmap axis = encode_motion_aware(kp, {std::sqrt(50.0), 0.0}, params);
        const Heatmap rotated = rotate_about(axis, kp, M_PI / 4.0);
        REQUIRE(max_abs_difference(diag, rotated) < 1e-3);
    }
}

TEST_CASE("rotation covariance over random displacements") {
    MotionEncodingParams params;
    RandomStream rng(424);
    for (int trial = 0; trial < 25; ++trial) {
        const Vec2 kp{rng.uniform(24.0, 40.0), rng.uniform(24.0, 40.0)};
        const double mag = rng.uniform(2.0, 16.0);
        const double base_angle = rng.uniform(0.0, 2.0 * M_PI);
        const double phi = rng.uniform(-M_PI, M_PI);
        const Vec2 d{mag * std::cos(base_angle), mag * std::sin(base_angle)};
        const Vec2 rd{mag * std::cos(base_angle + phi), mag * std::sin(base_angle + phi)};
        const Heatmap direct = encode_motion_aware(kp, rd, params);
        const Heatmap rotated = rotate_about(encode_motion_aware(kp, d, params), kp, phi);
        REQUIRE(max_abs_difference(direct, rotated) < 1e-3);
    }
}

TEST_CASE("fuse") {
    MotionEncodingParams params;
    const Heatmap h = encode_circular({20.25, 33.75}, params);
    SECTION("idempotent on identical maps") {
        const Heatmap f = fuse(h, h);
        REQUIRE(f.values == h.values);
    }
    SECTION("zero map absorbs") {
        const Heatmap zero = Heatmap::zeros(h.width, h.height);
        const Heatmap f = fuse(h, zero);
        for (float v : f.values) REQUIRE(v == 0.0f);
    }
    SECTION("dimension mismatch") {
        const Heatmap small = Heatmap::zeros(16, 16);
        REQUIRE_THROWS_AS(fuse(h, small), DimensionMismatch);
    }
    SECTION("same-center fusion preserves the mode") {
        const Vec2 kp{25.4, 30.6};
        const Heatmap f = fuse(encode_motion_aware(kp, {8.0, 0.0}, params),
                               encode_motion_aware(kp, {0.0, 8.0}, params));
        const auto det = decode(f);
        REQUIRE(det);
        REQUIRE((det->position - kp).norm() < 0.25);
    }
}

TEST_CASE("decode basics") {
    SECTION("isolated peak decodes with zero offset") {
        Heatmap hm = Heatmap::zeros(64, 64);
        hm.at(10, 20) = 0.7f;
        const auto det = decode(hm);
        REQUIRE(det);
        REQUIRE(det->position.x() == 10.0);
        REQUIRE(det->position.y() == 20.0);
        REQUIRE(det->confidence == Approx(0.7).margin(1e-7));
    }
    SECTION("sub-pixel circular round trip") {
        MotionEncodingParams params;
        const Vec2 kp{20.3, 40.7};
        const auto det = decode(encode_circular(kp, params));
        REQUIRE(det);
        REQUIRE((det->position - kp).norm() < 0.25);
    }
    SECTION("all-zero map is not detected") {
        REQUIRE_FALSE(decode(Heatmap::zeros(64, 64)));
    }
    SECTION("argmax tie breaks at the smallest row-major index") {
        Heatmap hm = Heatmap::zeros(8, 8);
        hm.at(5, 2) = 1.0f;
        hm.at(1, 6) = 1.0f;  // later in row-major order
        const auto det = decode(hm);
        REQUIRE(det);
        REQUIRE(det->position.x() == 5.0);
        REQUIRE(det->position.y() == 2.0);
    }
}

TEST_CASE("round-trip accuracy over random sub-pixel keypoints") {
    MotionEncodingParams params;
    RandomStream rng(777);
    double worst_circular = 0.0, worst_motion = 0.0, worst_fused = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec2 kp{rng.uniform(4.0, 60.0), rng.uniform(4.0, 60.0)};
        const auto circ = decode(encode_circular(kp, params));
        REQUIRE(circ);
        worst_circular = std::max(worst_circular, (circ->position - kp).norm());

        const double mag = rng.uniform(0.0, 16.0);
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        const Vec2 d{mag * std::cos(ang), mag * std::sin(ang)};
        const auto ma = decode(encode_motion_aware(kp, d, params));
        REQUIRE(ma);
        worst_motion = std::max(worst_motion, (ma->position - kp).norm());

        const double mag2 = rng.uniform(0.0, 16.0);
        const double ang2 = rng.uniform(0.0, 2.0 * M_PI);
        const Vec2 d2{mag2 * std::cos(ang2), mag2 * std::sin(ang2)};
        const auto fused = decode(fuse(encode_motion_aware(kp, d, params), encode_motion_aware(kp, d2, params)));
        REQUIRE(fused);
        worst_fused = std::max(worst_fused, (fused->position - kp).norm());
    }
    CHECK(worst_circular <= 0.25);
    CHECK(worst_motion <= 0.5);
    CHECK(worst_fused <= 0.25);
}

TEST_CASE("decode-encode is translation equivariant for integer shifts") {
    MotionEncodingParams params;
    RandomStream rng(31);
    for (int i = 0; i < 100; ++i) {
        const Vec2 kp{rng.uniform(8.0, 40.0), rng.uniform(8.0, 40.0)};
        const double du = std::floor(rng.uniform(0.0, 16.0));
        const double dv = std::floor(rng.uniform(0.0, 16.0));
        const auto base = decode(encode_circular(kp, params));
        const auto moved = decode(encode_circular(kp + Vec2{du, dv}, params));
        REQUIRE(base);
        REQUIRE(moved);
        REQUIRE(std::abs(moved->position.x() - base->position.x() - du) < 1e-6);
        REQUIRE(std::abs(moved->position.y() - base->position.y() - dv) < 1e-6);
    }
}

TEST_CASE("heatmap stack file round trip") {
    MotionEncodingParams params;
    RandomStream rng(5150);
    std::vector<Heatmap> maps;
    for (int k = 0; k < 8; ++k)
        maps.push_back(encode_circular({rng.uniform(2.0, 62.0), rng.uniform(2.0, 62.0)}, params));
    const auto path = std::filesystem::temp_directory_path() / "mapose_test_stack.mahm";
    write_heatmap_stack(maps, path);
    const auto back = read_heatmap_stack(path);
    REQUIRE(back.size() == maps.size());
    for (size_t k = 0; k < maps.size(); ++k) {
        REQUIRE(back[k].width == maps[k].width);
        REQUIRE(back[k].values == maps[k].values);
    }

    SECTION("truncated payload is rejected") {
        const auto truncated = std::filesystem::temp_directory_path() / "mapose_test_trunc.mahm";
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        REQUIRE_THROWS_AS(read_heatmap_stack(truncated), MalformedFile);
        std::filesystem::remove(truncated);
    }
    SECTION("bad magic is rejected") {
        const auto bad = std::filesystem::temp_directory_path() / "mapose_test_badmagic.mahm";
        std::ofstream out(bad, std::ios::binary);
        out << "NOPE" << std::string(64, '\0');
        out.close();
        REQUIRE_THROWS_AS(read_heatmap_stack(bad), MalformedFile);
        std::filesystem::remove(bad);
    }
    std::filesystem::remove(path);
}
