#include <catch2/catch.hpp>

#include "mapose/geometry.hpp"

using namespace mapose;

TEST_CASE("quat_to_matrix analytic cases") {
    SECTION("identity") {
        const Mat3 m = quat_to_matrix(Quaternion{});
        REQUIRE((m - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("90 degrees about z") {
        const Mat3 m = quat_to_matrix({0.70710678, 0.0, 0.0, 0.70710678});
        Mat3 expected;
        expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
        REQUIRE((m - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
    SECTION("180 degrees about x") {
        const Mat3 m = quat_to_matrix({0.0, 1.0, 0.0, 0.0});
        Mat3 expected = Vec3{1.0, -1.0, -1.0}.asDiagonal();
        REQUIRE((m - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("quat_to_matrix produces orthonormal right-handed matrices") {
    RandomStream rng(101);
    for (int i = 0; i < 1000; ++i) {
        const Quaternion q = random_unit_quaternion(rng);
        const Mat3 m = quat_to_matrix(q);
        REQUIRE((m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        REQUIRE(m.determinant() == Approx(1.0).margin(1e-9));
        // round trip through from_matrix recovers the same rotation (up to sign)
        const Quaternion r = Quaternion::from_matrix(m);
        const double direct = std::max({std::abs(r.w - q.w), std::abs(r.x - q.x),
                                        std::abs(r.y - q.y), std::abs(r.z - q.z)});
        const double flipped = std::max({std::abs(r.w + q.w), std::abs(r.x + q.x),
                                         std::abs(r.y + q.y), std::abs(r.z + q.z)});
        REQUIRE(std::min(direct, flipped) < 1e-9);
    }
}

TEST_CASE("geodesic_angle") {
    RandomStream rng(7);
    const Quaternion q = random_unit_quaternion(rng);
    SECTION("identical rotations") { REQUIRE(geodesic_angle(q, q) == 0.0); }
    SECTION("double cover") { REQUIRE(geodesic_angle(q, q.negated()) == 0.0); }
    SECTION("90 degrees about z") {
        REQUIRE(geodesic_angle({1, 0, 0, 0}, {0.70710678, 0, 0, 0.70710678}) ==
                Approx(M_PI / 2).margin(1e-9));
    }
    SECTION("symmetric, non-negative, zero only at +/-q") {
        for (int i = 0; i < 200; ++i) {
            const Quaternion a = random_unit_quaternion(rng);
            const Quaternion b = random_unit_quaternion(rng);
            const double ab = geodesic_angle(a, b);
            REQUIRE(ab == geodesic_angle(b, a));
            REQUIRE(ab >= 0.0);
            if (ab < 1e-9) {
                const bool same = std::abs(a.dot(b)) > 1.0 - 1e-12;
                REQUIRE(same);
            }
        }
    }
}

TEST_CASE("project analytic cases") {
    const CameraIntrinsics cam = default_camera();
    SECTION("principal ray") {
        const Pose pose{Quaternion{}, {0, 0, 10}};
        const Vec2 px = project(pose, cam, {0, 0, 0});
        REQUIRE(px.x() == Approx(128.0));
        REQUIRE(px.y() == Approx(128.0));
    }
    SECTION("unit offset in x") {
        const Pose pose{Quaternion{}, {0, 0, 10}};
        const Vec2 px = project(pose, cam, {1, 0, 0});
        REQUIRE(px.x() == Approx(228.0));
        REQUIRE(px.y() == Approx(128.0));
    }
    SECTION("behind camera") {
        const Pose pose{Quaternion{}, {0, 0, -1}};
        REQUIRE_THROWS_AS(project(pose, cam, {0, 0, 0}), NonPositiveDepth);
    }
}

TEST_CASE("project is exactly invariant under quaternion negation") {
    RandomStream rng(33);
    const CameraIntrinsics cam = default_camera();
    for (int i = 0; i < 100; ++i) {
        const Quaternion q = random_unit_quaternion(rng);
        const Vec3 t{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(5, 15)};
        const Vec3 p{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
        const Vec2 a = project({q, t}, cam, p);
        const Vec2 b = project({q.negated(), t}, cam, p);
        REQUIRE(a.x() == b.x());
        REQUIRE(a.y() == b.y());
    }
}

TEST_CASE("pose inverse round trip") {
    RandomStream rng(55);
    for (int i = 0; i < 200; ++i) {
        const Pose pose{random_unit_quaternion(rng),
                        {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}};
        const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 back = pose.inverse().apply(pose.apply(p));
        REQUIRE((back - p).norm() < 1e-9);
    }
}

TEST_CASE("quaternion canonical sign") {
    const Quaternion q{-0.5, 0.5, -0.5, 0.5};
    const Quaternion c = q.canonical();
    REQUIRE(c.w == Approx(0.5));
    REQUIRE(c.x == Approx(-0.5));
    const Quaternion zero_w{0.0, -1.0, 0.0, 0.0};
    REQUIRE(zero_w.canonical().x == Approx(1.0));
}

TEST_CASE("camera intrinsics validation") {
    CameraIntrinsics cam = default_camera();
    REQUIRE_NOTHROW(cam.validate());
    cam.fx = -1.0;
    REQUIRE_THROWS_AS(cam.validate(), std::invalid_argument);
    cam = default_camera();
    cam.cx = 300.0;
    REQUIRE_THROWS_AS(cam.validate(), std::invalid_argument);
}

TEST_CASE("random stream normal moments") {
    RandomStream rng(99);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double stddev = std::sqrt(sum2 / n - mean * mean);
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(stddev == Approx(1.0).epsilon(0.02));
}
