#include <doctest.h>

#include <cmath>
#include <numbers>

#include "planloc/error.hpp"
#include "planloc/infer.hpp"
#include "planloc/rng.hpp"

using namespace planloc;

namespace {

constexpr double kPi = std::numbers::pi;

PoseVolume normalized(PoseVolume v) {
    const double s = v.sum();
    for (auto& x : v.values()) x /= s;
    v.set_kind(VolumeKind::Probability);
    return v;
}

// exp of a separable quadratic with vertex (cx, cy, ck) in bin units.
PoseVolume log_quadratic(int W, int H, int K, double cx, double cy, double ck) {
    PoseVolume v(GridSpec({10.0, -4.0}, 0.5, W, H), K, VolumeKind::LogScore);
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                v.at(k, i, j) = std::exp(-0.7 * (j - cx) * (j - cx) - 0.4 * (i - cy) * (i - cy) - 0.9 * (k - ck) * (k - ck));
    return normalized(v);
}

}  // namespace

TEST_CASE("max bin breaks ties by row, column, rotation") {
    PoseVolume v(GridSpec({0, 0}, 1.0, 4, 4), 4, VolumeKind::Probability, 0.0);
    v.at(3, 1, 2) = 0.25;
    v.at(1, 1, 2) = 0.25;
    v.at(0, 2, 0) = 0.25;
    v.at(0, 1, 3) = 0.25;
    auto b = max_bin(v);
    CHECK(b.row == 1);
    CHECK(b.col == 2);
    CHECK(b.k == 1);
}

TEST_CASE("quadratic refinement recovers the vertex of a log-parabola") {
    auto v = log_quadratic(11, 9, 8, 5.3, 3.8, 4.2);
    auto e = argmax_pose(v);
    const Vec2 c0 = v.spec().cell_center(0, 0);
    CHECK(e.pose.x() == doctest::Approx(c0.x + 5.3 * 0.5).epsilon(1e-12));
    CHECK(e.pose.y() == doctest::Approx(c0.y + 3.8 * 0.5).epsilon(1e-12));
    CHECK(e.pose.theta() == doctest::Approx(rotation_angle(0, 8) + 4.2 * v.bin_width()).epsilon(1e-12));
    CHECK(e.probability == v.at(4, 4, 5));
}

TEST_CASE("refinement is skipped at borders and bounded by half a bin") {
    auto v = log_quadratic(6, 6, 8, 0.2, 5.0, 3.0);
    auto e = argmax_pose(v);
    CHECK(e.pose.x() == v.spec().cell_center(0, 0).x);
    CHECK(e.pose.y() == v.spec().cell_center(5, 0).y);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        PoseVolume r(GridSpec({0, 0}, 1.0, 7, 7), 5, VolumeKind::LogScore);
        for (auto& x : r.values()) x = rng.uniform();
        r = normalized(r);
        auto b = max_bin(r);
        auto p = argmax_pose(r);
        CHECK(std::abs(p.pose.x() - b.col) <= 0.5);
        CHECK(std::abs(p.pose.y() - b.row) <= 0.5);
        CHECK(std::abs(normalize_angle(p.pose.theta() - r.theta(b.k))) <= 0.5 * r.bin_width() + 1e-12);
    }
}

TEST_CASE("refinement wraps across the heading seam") {
    auto v = log_quadratic(5, 5, 8, 2.0, 2.0, 0.0);
    // Make bin K-1 the heavier neighbour of bin 0.
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            v.at(7, i, j) = v.at(1, i, j) * 2.0;
        }
    v = normalized(v);
    auto e = argmax_pose(v);
    CHECK(normalize_angle(e.pose.theta() - v.theta(0)) < 0.0);
}

TEST_CASE("covariance equals the brute-force windowed moment") {
    Rng rng(8);
    PoseVolume v(GridSpec({0, 0}, 0.5, 21, 19), 16, VolumeKind::LogScore);
    for (auto& x : v.values()) x = rng.uniform();
    v = normalized(v);
    const Pose2 mode(4.6, 4.1, 0.3);
    CovarianceWindow w{1.7, 0.5};
    auto m = covariance(v, mode, w);
    double mass = 0.0, s[3][3] = {};
    for (int k = 0; k < 16; ++k)
        for (int i = 0; i < 19; ++i)
            for (int j = 0; j < 21; ++j) {
                const double e[3] = {0.5 * j - 4.6, 0.5 * i - 4.1, normalize_angle(v.theta(k) - 0.3)};
                if (std::abs(e[0]) > 1.7 || std::abs(e[1]) > 1.7 || std::abs(e[2]) > 0.5) continue;
                const double p = v.at(k, i, j);
                mass += p;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) s[a][b] += p * e[a] * e[b];
            }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(m[a][b] == doctest::Approx(s[a][b] / mass).epsilon(1e-12));
    CHECK(m[0][1] == m[1][0]);
    for (int a = 0; a < 3; ++a) CHECK(m[a][a] >= 0.0);
}

TEST_CASE("covariance of a point mass is zero; empty window is degenerate") {
    PoseVolume v(GridSpec({0, 0}, 1.0, 9, 9), 4, VolumeKind::Probability, 0.0);
    v.at(2, 4, 4) = 1.0;
    auto m = covariance(v, v.pose(4, 4, 2));
    for (auto& row : m)
        for (auto x : row) CHECK(x == 0.0);
    CHECK_THROWS_AS(covariance(v, v.pose(0, 0, 2)), DegenerateError);
    PoseVolume s(GridSpec({0, 0}, 1.0, 9, 9), 4, VolumeKind::LogScore);
    CHECK_THROWS_AS(covariance(s, Pose2()), DomainError);
}

TEST_CASE("local modes are separated and ordered") {
    PoseVolume v(GridSpec({0, 0}, 1.0, 20, 20), 8, VolumeKind::Probability, 0.0);
    v.at(1, 5, 5) = 0.4;
    v.at(1, 5, 6) = 0.3;   // within 2 m of the first mode
    v.at(5, 15, 15) = 0.2;
    v.at(1, 5, 8) = 0.1;   // 3 m away
    auto modes = local_modes(v, 5);
    REQUIRE(modes.size() == 3);
    CHECK(modes[0].probability == 0.4);
    CHECK(modes[1].probability == 0.2);
    CHECK(modes[2].probability == 0.1);
    CHECK(modes[0].pose == v.pose(5, 5, 1));
    CHECK(local_modes(v, 1).size() == 1);
    CHECK(local_modes(v, 0).empty());
    // A narrow heading separation keeps same-cell modes at distinct headings.
    PoseVolume h(GridSpec({0, 0}, 1.0, 5, 5), 8, VolumeKind::Probability, 0.0);
    h.at(0, 2, 2) = 0.6;
    h.at(4, 2, 2) = 0.4;
    CHECK(local_modes(h, 3).size() == 1);
    CHECK(local_modes(h, 3, {2.0, 0.5}).size() == 2);
}

TEST_CASE("interpolation is exact on affine fields and circular in heading") {
    PoseVolume v(GridSpec({-1.0, 2.0}, 0.5, 6, 5), 8, VolumeKind::Probability);
    for (int k = 0; k < 8; ++k)
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 6; ++j) v.at(k, i, j) = 1.0 + 0.3 * j - 0.2 * i + 0.05 * k;
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const double j = rng.uniform(0, 5), i = rng.uniform(0, 4), k = rng.uniform(0, 7);
        Pose2 p(-1.0 + 0.5 * j, 2.0 + 0.5 * i, rotation_angle(0, 8) + k * v.bin_width());
        CHECK(*interpolate(v, p) == doctest::Approx(1.0 + 0.3 * j - 0.2 * i + 0.05 * k).epsilon(1e-12));
    }
    // Halfway between bin 7 and bin 0.
    Pose2 seam(-1.0, 2.0, rotation_angle(7, 8) + 0.5 * v.bin_width());
    CHECK(*interpolate(v, seam) == doctest::Approx(1.0 + 0.5 * 0.05 * 7).epsilon(1e-12));
    CHECK(*interpolate(v, v.pose(3, 4, 2)) == v.at(2, 3, 4));
    CHECK_FALSE(interpolate(v, Pose2(-1.3, 2.0, 0.0)));
    CHECK_FALSE(interpolate(v, Pose2(0.0, 4.1, 0.0)));
    CHECK(interpolate(v, Pose2(1.5, 4.0, 0.0)));
}

TEST_CASE("loss is the floored negative log of the interpolated probability") {
    PoseVolume v(GridSpec({0, 0}, 1.0, 4, 4), 4, VolumeKind::Probability, 0.0);
    v.at(1, 1, 1) = 0.5;
    CHECK(nll_loss(v, v.pose(1, 1, 1)) == doctest::Approx(std::log(2.0)));
    CHECK(nll_loss(v, Pose2(1.5, 1.0, v.theta(1))) == doctest::Approx(std::log(4.0)));
    CHECK(nll_loss(v, v.pose(3, 3, 0)) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(nll_loss(v, Pose2(9, 9, 0)), DomainError);
}
